//! Thematic term dictionaries and whole-token phrase matching.
//!
//! Each category is scanned independently, left to right, taking the longest
//! dictionary phrase that starts at the current token and skipping past it.
//! Hits never overlap inside one category, but the same tokens may score in
//! several categories (the default dictionaries share words such as
//! "support", "tailored" and "growth").
//!
//! Only listed forms match: there is no stemming, so "saving" is not a hit
//! for "savings".

use std::collections::{HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Taxonomy};
use crate::error::{Error, Result};

pub const MAX_PHRASE_TOKENS: usize = 5;

pub const EMPOWERMENT: &str = "empowerment";
pub const FINANCIAL: &str = "financial";
pub const BENEFITS_FEATURES: &str = "benefits_features";
pub const DEMOGRAPHIC_SPECIFIC: &str = "demographic_specific";

const DEFAULT_EMPOWERMENT: &[&str] = &[
    "empower", "support", "uplift", "confidence", "motivate", "empowered", "supported",
    "uplifting", "confident", "motivated", "encourage", "encouraged", "encouragement",
    "inspire", "inspired", "inspiration", "strength", "strong", "resilient", "determined",
    "ambitious", "ambition", "success", "empowering", "supportive", "uplifted", "confidently",
    "motivating", "encouraging", "inspiring", "independence", "flourish", "thrive", "growth",
];

const DEFAULT_FINANCIAL: &[&str] = &[
    "interest rate", "competitive interest rate", "affordable rate", "savings",
    "high-yield savings", "checking account", "earnings", "wealth", "investment options",
    "grow your wealth", "mortgage rates", "low-interest mortgage", "financial foundation", "apy",
    "annual percentage yield", "loans", "home loans", "auto loans", "personal loans",
    "investment", "returns", "dividends", "no fees", "low fees", "zero charges",
    "free of charge", "credit card", "balance transfer", "equity", "refinancing",
    "financial planning",
];

const DEFAULT_BENEFITS_FEATURES: &[&str] = &[
    "tailored solutions", "guidance", "cutting-edge technology", "dynamic lifestyle",
    "first-time homebuyer programs", "exclusive banking community", "low-interest", "secure",
    "safe", "protected", "fraud prevention", "insured", "rewards", "cashback", "points",
    "benefits", "bonuses", "customer service", "support", "personalized service",
    "dedicated support", "flexible terms", "customized", "tailored", "adaptable",
    "global access", "instant alerts", "account management", "financial advice",
    "multi-currency", "high-tech", "paperless", "seamless online banking", "mobile app",
    "24/7 service", "exclusive benefits",
];

const DEFAULT_DEMOGRAPHIC_SPECIFIC: &[&str] = &[
    "young professionals", "career", "growth", "achieve", "start", "build", "financial future",
    "retirement", "peace of mind", "nest egg", "golden years", "secure future", "family",
    "home", "kids", "children", "education", "protection", "luxury", "exclusive", "premium",
    "elite", "prestige", "newlyweds", "middle-aged couples", "single parents", "high-income",
    "dual income", "empty nesters", "first-time buyers", "retirees", "ambitious",
    "dynamic lifestyle", "personalized", "personal", "tailored", "individual", "specific",
    "customized", "bespoke", "unique", "one-of-a-kind", "custom-fit", "individualized",
    "custom-built", "custom-crafted", "specialized", "distinctive", "made-to-order",
    "personal touch", "handcrafted",
];

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercases and splits text into word tokens.
///
/// Anything that is not a letter, a digit, or an apostrophe between two
/// alphanumerics becomes a separator, so `$`, `+`, `/` and `-` all split.
pub fn normalize_text(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut buf = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            buf.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            buf.push('\'');
        } else {
            buf.push(' ');
        }
    }
    buf.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCategory {
    pub id: String,
    pub display_name: String,
}

impl TermCategory {
    pub fn new(id: &str) -> Self {
        let display_name = match id {
            EMPOWERMENT => "Empowerment",
            FINANCIAL => "Financial",
            BENEFITS_FEATURES => "Benefits/features",
            DEMOGRAPHIC_SPECIFIC => "Demographic-specific",
            other => other,
        };
        TermCategory {
            id: id.to_string(),
            display_name: display_name.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    phrase: Option<usize>,
}

/// Token trie over one category's phrases.
#[derive(Debug, Clone)]
struct PhraseTrie {
    nodes: Vec<TrieNode>,
}

impl PhraseTrie {
    fn build(phrases: &[Vec<String>]) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for (pi, tokens) in phrases.iter().enumerate() {
            let mut at = 0;
            for t in tokens {
                at = match nodes[at].children.get(t) {
                    Some(&next) => next,
                    None => {
                        nodes.push(TrieNode::default());
                        let next = nodes.len() - 1;
                        nodes[at].children.insert(t.clone(), next);
                        next
                    }
                };
            }
            nodes[at].phrase = Some(pi);
        }
        PhraseTrie { nodes }
    }

    /// Longest phrase starting at `tokens[0]`, as (phrase index, token length).
    fn longest_prefix(&self, tokens: &[String]) -> Option<(usize, usize)> {
        let mut at = 0;
        let mut best = None;
        for (depth, t) in tokens.iter().enumerate() {
            match self.nodes[at].children.get(t) {
                Some(&next) => at = next,
                None => break,
            }
            if let Some(p) = self.nodes[at].phrase {
                best = Some((p, depth + 1));
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct CategoryDictionary {
    pub category: TermCategory,
    phrases: Vec<String>,
    tokens: Vec<Vec<String>>,
    trie: PhraseTrie,
}

impl CategoryDictionary {
    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    /// Normalized token form of every phrase, parallel to [`Self::phrases`].
    pub fn phrase_tokens(&self) -> &[Vec<String>] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// A match of one dictionary phrase at `token_start..token_start + token_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermHit {
    pub category: usize,
    pub phrase: usize,
    pub token_start: usize,
    pub token_len: usize,
}

impl TermHit {
    pub fn token_end(&self) -> usize {
        self.token_start + self.token_len
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    dictionaries: Vec<CategoryDictionary>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let entries = [
            (EMPOWERMENT, DEFAULT_EMPOWERMENT),
            (FINANCIAL, DEFAULT_FINANCIAL),
            (BENEFITS_FEATURES, DEFAULT_BENEFITS_FEATURES),
            (DEMOGRAPHIC_SPECIFIC, DEFAULT_DEMOGRAPHIC_SPECIFIC),
        ]
        .into_iter()
        .map(|(id, phrases)| (id.to_string(), phrases.iter().map(|p| p.to_string()).collect()))
        .collect();
        Lexicon::new(entries).expect("embedded lexicon is valid")
    }
}

impl Lexicon {
    /// Builds a lexicon from `(category id, phrases)` pairs, in order.
    pub fn new(entries: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut issues = Vec::new();
        let mut seen_ids = HashSet::new();
        let mut dictionaries = Vec::with_capacity(entries.len());
        for (id, raw) in entries {
            if id.is_empty() || !seen_ids.insert(id.clone()) {
                issues.push(format!("term category id '{id}' is empty or duplicated"));
                continue;
            }
            if raw.is_empty() {
                issues.push(format!("term category '{id}' has an empty dictionary"));
            }
            let mut phrases = Vec::with_capacity(raw.len());
            let mut tokens = Vec::with_capacity(raw.len());
            let mut seen = HashSet::new();
            for phrase in raw {
                let phrase = phrase.trim().to_lowercase();
                let toks = normalize_text(&phrase);
                if toks.is_empty() || toks.len() > MAX_PHRASE_TOKENS {
                    issues.push(format!(
                        "phrase '{phrase}' in '{id}' must have 1..={MAX_PHRASE_TOKENS} tokens"
                    ));
                    continue;
                }
                if !seen.insert(toks.clone()) {
                    issues.push(format!("duplicate phrase '{phrase}' in '{id}'"));
                    continue;
                }
                phrases.push(phrase);
                tokens.push(toks);
            }
            let trie = PhraseTrie::build(&tokens);
            dictionaries.push(CategoryDictionary {
                category: TermCategory::new(&id),
                phrases,
                tokens,
                trie,
            });
        }
        if dictionaries.is_empty() && issues.is_empty() {
            issues.push("lexicon has no categories".to_string());
        }
        if issues.is_empty() {
            Ok(Lexicon { dictionaries })
        } else {
            Err(Error::Validation { issues })
        }
    }

    /// Reads a JSON object mapping category id to an array of phrases.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: IndexMap<String, Vec<String>> =
            serde_json::from_str(&raw).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
        Lexicon::new(map.into_iter().collect())
    }

    pub fn to_json_map(&self) -> IndexMap<String, Vec<String>> {
        self.dictionaries
            .iter()
            .map(|d| (d.category.id.clone(), d.phrases.clone()))
            .collect()
    }

    pub fn dictionaries(&self) -> &[CategoryDictionary] {
        &self.dictionaries
    }

    pub fn categories(&self) -> impl Iterator<Item = &TermCategory> {
        self.dictionaries.iter().map(|d| &d.category)
    }

    pub fn category_ids(&self) -> Vec<String> {
        self.categories().map(|c| c.id.clone()).collect()
    }

    pub fn dictionary(&self, id: &str) -> Option<&CategoryDictionary> {
        self.dictionaries.iter().find(|d| d.category.id == id)
    }

    /// Every token appearing in any phrase.
    pub fn vocabulary(&self) -> HashSet<&str> {
        self.dictionaries
            .iter()
            .flat_map(|d| d.tokens.iter().flatten().map(String::as_str))
            .collect()
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(
            serde_json::to_string(&self.to_json_map())
                .expect("lexicon serializes")
                .as_bytes(),
        )
    }
}

/// Per-category hits for a token list, in lexicon category order.
pub fn match_terms(tokens: &[String], lexicon: &Lexicon) -> Vec<Vec<TermHit>> {
    lexicon
        .dictionaries
        .iter()
        .enumerate()
        .map(|(ci, dict)| {
            let mut hits = Vec::new();
            let mut pos = 0;
            while pos < tokens.len() {
                match dict.trie.longest_prefix(&tokens[pos..]) {
                    Some((phrase, len)) => {
                        hits.push(TermHit {
                            category: ci,
                            phrase,
                            token_start: pos,
                            token_len: len,
                        });
                        pos += len;
                    }
                    None => pos += 1,
                }
            }
            hits
        })
        .collect()
}

/// Number of hits per category for one text.
pub fn count_text(text: &str, lexicon: &Lexicon) -> Vec<u32> {
    match_terms(&normalize_text(text), lexicon)
        .iter()
        .map(|h| h.len() as u32)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCounts {
    pub group_id: String,
    /// `per_slogan[category][slogan]`, slogans in index order.
    per_slogan: Vec<Vec<u32>>,
    n_slogans: usize,
}

impl GroupCounts {
    pub fn n_slogans(&self) -> usize {
        self.n_slogans
    }

    pub fn per_slogan(&self, category: usize) -> &[u32] {
        &self.per_slogan[category]
    }

    pub fn raw_count(&self, category: usize) -> u64 {
        self.per_slogan[category].iter().map(|&c| u64::from(c)).sum()
    }
}

/// Hit counts per (group, term category). Raw counts are always derived from
/// the per-slogan vectors, so the two cannot disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsTable {
    categories: Vec<String>,
    groups: Vec<GroupCounts>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountsFile {
    categories: Vec<String>,
    n_slogans: IndexMap<String, usize>,
    raw_count: IndexMap<String, u64>,
    per_slogan: IndexMap<String, Vec<u32>>,
}

fn cell_key(group: &str, category: &str) -> String {
    format!("{group}/{category}")
}

impl CountsTable {
    pub fn new(categories: Vec<String>, groups: Vec<GroupCounts>) -> Result<Self> {
        let mut issues = Vec::new();
        let mut seen = HashSet::new();
        for g in &groups {
            if !seen.insert(g.group_id.as_str()) {
                issues.push(format!("duplicate group '{}' in counts", g.group_id));
            }
            if g.per_slogan.len() != categories.len() {
                issues.push(format!(
                    "group '{}' has {} category vectors, expected {}",
                    g.group_id,
                    g.per_slogan.len(),
                    categories.len()
                ));
            }
            for (ci, v) in g.per_slogan.iter().enumerate() {
                if v.len() != g.n_slogans {
                    issues.push(format!(
                        "group '{}' category #{ci}: {} per-slogan entries for {} slogans",
                        g.group_id,
                        v.len(),
                        g.n_slogans
                    ));
                }
            }
        }
        if issues.is_empty() {
            Ok(CountsTable { categories, groups })
        } else {
            Err(Error::Validation { issues })
        }
    }

    pub fn group_counts(group_id: &str, per_slogan: Vec<Vec<u32>>, n_slogans: usize) -> GroupCounts {
        GroupCounts {
            group_id: group_id.to_string(),
            per_slogan,
            n_slogans,
        }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn groups(&self) -> &[GroupCounts] {
        &self.groups
    }

    pub fn group(&self, id: &str) -> Option<&GroupCounts> {
        self.groups.iter().find(|g| g.group_id == id)
    }

    pub fn category_index(&self, id: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == id)
    }

    pub fn raw_count(&self, group: &str, category: &str) -> Option<u64> {
        let ci = self.category_index(category)?;
        Some(self.group(group)?.raw_count(ci))
    }

    /// Reorders groups to taxonomy order, adding empty entries for groups
    /// without slogans. Groups unknown to the taxonomy are rejected.
    pub fn align_to(&self, taxonomy: &Taxonomy) -> Result<CountsTable> {
        let unknown: Vec<String> = self
            .groups
            .iter()
            .filter(|g| taxonomy.group(&g.group_id).is_none())
            .map(|g| format!("group '{}' in counts is not in the taxonomy", g.group_id))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Validation { issues: unknown });
        }
        let groups = taxonomy
            .groups
            .iter()
            .map(|t| match self.group(&t.id) {
                Some(g) => g.clone(),
                None => GroupCounts {
                    group_id: t.id.clone(),
                    per_slogan: vec![Vec::new(); self.categories.len()],
                    n_slogans: 0,
                },
            })
            .collect();
        Ok(CountsTable {
            categories: self.categories.clone(),
            groups,
        })
    }

    pub fn to_json(&self) -> String {
        let mut file = CountsFile {
            categories: self.categories.clone(),
            n_slogans: IndexMap::new(),
            raw_count: IndexMap::new(),
            per_slogan: IndexMap::new(),
        };
        for g in &self.groups {
            file.n_slogans.insert(g.group_id.clone(), g.n_slogans);
            for (ci, c) in self.categories.iter().enumerate() {
                let key = cell_key(&g.group_id, c);
                file.raw_count.insert(key.clone(), g.raw_count(ci));
                file.per_slogan.insert(key, g.per_slogan[ci].clone());
            }
        }
        let mut out = serde_json::to_string_pretty(&file).expect("counts serialize");
        out.push('\n');
        out
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let file: CountsFile = serde_json::from_str(raw)
            .map_err(|e| Error::config(format!("malformed counts file: {e}")))?;
        let mut issues = Vec::new();
        let mut groups = Vec::new();
        for (g, &n) in &file.n_slogans {
            let mut per_slogan = Vec::new();
            for c in &file.categories {
                let key = cell_key(g, c);
                let v = file.per_slogan.get(&key).cloned().unwrap_or_else(|| {
                    issues.push(format!("missing per_slogan entry '{key}'"));
                    Vec::new()
                });
                let sum: u64 = v.iter().map(|&x| u64::from(x)).sum();
                match file.raw_count.get(&key) {
                    Some(&raw) if raw != sum => issues.push(format!(
                        "raw_count '{key}' = {raw} disagrees with per-slogan sum {sum}"
                    )),
                    Some(_) => {}
                    None => issues.push(format!("missing raw_count entry '{key}'")),
                }
                per_slogan.push(v);
            }
            groups.push(GroupCounts {
                group_id: g.clone(),
                per_slogan,
                n_slogans: n,
            });
        }
        if !issues.is_empty() {
            return Err(Error::Validation { issues });
        }
        CountsTable::new(file.categories, groups)
    }
}

/// Counts dictionary hits for every slogan. Groups appear in corpus order
/// (sorted by id); use [`CountsTable::align_to`] for taxonomy order.
pub fn count_corpus(corpus: &Corpus, lexicon: &Lexicon) -> CountsTable {
    let per_slogan: Vec<Vec<u32>> = corpus
        .slogans()
        .par_iter()
        .map(|s| count_text(&s.text, lexicon))
        .collect();
    let n_cat = lexicon.dictionaries.len();
    let mut groups: Vec<GroupCounts> = Vec::new();
    for (s, counts) in corpus.slogans().iter().zip(per_slogan) {
        if groups.last().is_none_or(|g| g.group_id != s.group_id) {
            groups.push(GroupCounts {
                group_id: s.group_id.clone(),
                per_slogan: vec![Vec::new(); n_cat],
                n_slogans: 0,
            });
        }
        let g = groups.last_mut().expect("pushed above");
        g.n_slogans += 1;
        for (ci, c) in counts.into_iter().enumerate() {
            g.per_slogan[ci].push(c);
        }
    }
    CountsTable {
        categories: lexicon.category_ids(),
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        normalize_text(s)
    }

    fn hits_by_id(text: &str) -> Vec<(String, Vec<String>)> {
        let lex = Lexicon::default();
        match_terms(&toks(text), &lex)
            .into_iter()
            .enumerate()
            .map(|(ci, hits)| {
                let d = &lex.dictionaries()[ci];
                (
                    d.category.id.clone(),
                    hits.iter().map(|h| d.phrases()[h.phrase].clone()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(toks("Save Smarter, Achieve More!"), ["save", "smarter", "achieve", "more"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("high-yield 24/7 APY"), ["high", "yield", "24", "7", "apy"]);
    }

    #[test]
    fn normalize_apostrophes() {
        assert_eq!(toks("bachelor's 'quoted' it’s"), ["bachelor's", "quoted", "it's"]);
        assert_eq!(toks("$250,000+ a year"), ["250", "000", "a", "year"]);
    }

    #[test]
    fn default_sizes() {
        let lex = Lexicon::default();
        let sizes: Vec<usize> = lex.dictionaries().iter().map(|d| d.len()).collect();
        assert_eq!(sizes, [34, 31, 36, 51]);
    }

    #[test]
    fn empower_your_savings() {
        let h = hits_by_id("Empower your savings");
        assert_eq!(h[0].1, ["empower"]);
        assert_eq!(h[1].1, ["savings"]);
        assert!(h[2].1.is_empty() && h[3].1.is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let h = hits_by_id("competitive interest rate");
        assert_eq!(h[1].1, ["competitive interest rate"]);
    }

    #[test]
    fn categories_scan_independently() {
        let h = hits_by_id("dedicated support");
        assert_eq!(h[0].1, ["support"]);
        assert_eq!(h[2].1, ["dedicated support"]);
    }

    #[test]
    fn hyphen_forms_match_both_ways() {
        assert_eq!(hits_by_id("high-yield savings")[1].1, ["high-yield savings"]);
        assert_eq!(hits_by_id("high yield savings")[1].1, ["high-yield savings"]);
    }

    #[test]
    fn whole_tokens_only() {
        let h = hits_by_id("headstrong");
        assert!(h.iter().all(|(_, v)| v.is_empty()));
    }

    #[test]
    fn inflections_are_separate_entries() {
        assert_eq!(hits_by_id("empowered and empowering")[0].1, ["empowered", "empowering"]);
        assert!(hits_by_id("saving")[1].1.is_empty());
    }

    #[test]
    fn rejects_duplicates_and_long_phrases() {
        let dup = Lexicon::new(vec![("a".into(), vec!["x y".into(), "x-y".into()])]);
        assert!(dup.is_err());
        let long = Lexicon::new(vec![("a".into(), vec!["a b c d e f".into()])]);
        assert!(long.is_err());
        let empty = Lexicon::new(vec![("a".into(), vec![])]);
        assert!(empty.is_err());
        let cross = Lexicon::new(vec![
            ("a".into(), vec!["support".into()]),
            ("b".into(), vec!["support".into()]),
        ]);
        assert!(cross.is_ok());
    }

    #[test]
    fn counts_json_round_trip() {
        let t = CountsTable::new(
            vec!["a".into(), "b".into()],
            vec![CountsTable::group_counts("g", vec![vec![1, 2], vec![0, 0]], 2)],
        )
        .unwrap();
        let json = t.to_json();
        assert!(json.contains("\"g/a\": 3"));
        assert_eq!(CountsTable::from_json(&json).unwrap(), t);
    }

    #[test]
    fn counts_file_with_wrong_raw_count_rejected() {
        let raw = r#"{"categories":["a"],"n_slogans":{"g":1},"raw_count":{"g/a":5},"per_slogan":{"g/a":[1]}}"#;
        assert!(CountsTable::from_json(raw).is_err());
    }

    #[test]
    fn vector_length_must_match_slogan_count() {
        let bad = CountsTable::new(
            vec!["a".into()],
            vec![CountsTable::group_counts("g", vec![vec![1]], 2)],
        );
        assert!(bad.is_err());
    }
}
