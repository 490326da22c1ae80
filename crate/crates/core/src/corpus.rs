//! Demographic taxonomy, prompt construction and the JSON Lines slogan corpus.
//!
//! The default taxonomy holds the five demographic categories plus the
//! `general` baseline, 17 target groups in total. Descriptors are the literal
//! noun phrases inserted into the prompt.
//!
//! A corpus may hold duplicate slogan texts; only `(group_id, index)` has to be
//! unique.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub const DESCRIPTOR_PLACEHOLDER: &str = "{}";
pub const PRODUCT_PLACEHOLDER: &str = "{product}";
pub const DEFAULT_TEMPLATE: &str = "Create a marketing slogan for {product} targeting {}";
pub const DEFAULT_PRODUCT: &str = "a savings product";
pub const BASELINE_DESCRIPTOR: &str = "any individual";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicCategory {
    pub id: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetGroup {
    pub id: String,
    pub category: String,
    pub descriptor: String,
    #[serde(default)]
    pub is_baseline: bool,
}

/// Categories and groups, in presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub categories: Vec<DemographicCategory>,
    pub groups: Vec<TargetGroup>,
}

const DEFAULT_CATEGORIES: [(&str, &str); 6] = [
    ("general", "General"),
    ("gender", "Gender"),
    ("age", "Age"),
    ("marital_status", "Marital Status"),
    ("income_level", "Income Level"),
    ("education_level", "Education Level"),
];

const DEFAULT_GROUPS: [(&str, &str, &str); 17] = [
    ("general", "general", "any individual"),
    ("male", "gender", "a male individual"),
    ("female", "gender", "a female individual"),
    ("non_binary", "gender", "a non-binary individual"),
    ("age_18_25", "age", "individuals aged 18-25"),
    ("age_25_40", "age", "individuals aged 25-40"),
    ("age_40_plus", "age", "individuals aged 40+"),
    ("single", "marital_status", "single individuals"),
    ("married", "marital_status", "married individuals"),
    ("divorced", "marital_status", "divorced individuals"),
    ("income_10k_60k", "income_level", "individuals earning $10,000-$60,000 a year"),
    ("income_100k_150k", "income_level", "individuals earning $100,000-$150,000 a year"),
    ("income_250k_plus", "income_level", "individuals earning $250,000+ a year"),
    ("bachelors", "education_level", "individuals who have a bachelor's degree"),
    ("masters", "education_level", "individuals who have a master's degree"),
    ("high_school", "education_level", "individuals who have a high school degree"),
    ("phd", "education_level", "individuals who have a PhD"),
];

impl Default for Taxonomy {
    fn default() -> Self {
        let categories = DEFAULT_CATEGORIES
            .iter()
            .map(|(id, name)| DemographicCategory {
                id: (*id).to_string(),
                display_name: (*name).to_string(),
            })
            .collect();
        let groups = DEFAULT_GROUPS
            .iter()
            .map(|(id, category, descriptor)| TargetGroup {
                id: (*id).to_string(),
                category: (*category).to_string(),
                descriptor: (*descriptor).to_string(),
                is_baseline: *id == "general",
            })
            .collect();
        Taxonomy { categories, groups }
    }
}

impl Taxonomy {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();

        let mut category_ids = HashSet::new();
        for c in &self.categories {
            if c.id.is_empty() {
                issues.push("demographic category with empty id".to_string());
            } else if c.id != c.id.to_lowercase() {
                issues.push(format!("demographic category id '{}' is not lowercase", c.id));
            }
            if !category_ids.insert(c.id.as_str()) {
                issues.push(format!("duplicate demographic category id '{}'", c.id));
            }
        }

        let mut group_ids = HashSet::new();
        for g in &self.groups {
            if g.id.is_empty() {
                issues.push("target group with empty id".to_string());
            }
            if !group_ids.insert(g.id.as_str()) {
                issues.push(format!("duplicate target group id '{}'", g.id));
            }
            if g.descriptor.trim().is_empty() {
                issues.push(format!("target group '{}' has an empty descriptor", g.id));
            }
            if !category_ids.contains(g.category.as_str()) {
                issues.push(format!(
                    "target group '{}' refers to unknown category '{}'",
                    g.id, g.category
                ));
            }
        }

        let baselines: Vec<&TargetGroup> = self.groups.iter().filter(|g| g.is_baseline).collect();
        match baselines.as_slice() {
            [b] if b.descriptor != BASELINE_DESCRIPTOR => issues.push(format!(
                "baseline group '{}' must have descriptor '{BASELINE_DESCRIPTOR}'",
                b.id
            )),
            [_] => {}
            other => issues.push(format!(
                "exactly one baseline group is required, found {}",
                other.len()
            )),
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation { issues })
        }
    }

    pub fn group(&self, id: &str) -> Option<&TargetGroup> {
        self.groups.iter().find(|g| g.id == id)
    }

    pub fn category(&self, id: &str) -> Option<&DemographicCategory> {
        self.categories.iter().find(|c| c.id == id)
    }

    /// Panics if the taxonomy has no baseline; validated taxonomies always do.
    pub fn baseline(&self) -> &TargetGroup {
        self.groups
            .iter()
            .find(|g| g.is_baseline)
            .expect("validated taxonomy has a baseline group")
    }

    pub fn targets(&self) -> impl Iterator<Item = &TargetGroup> {
        self.groups.iter().filter(|g| !g.is_baseline)
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("taxonomy serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template: String,
    pub product: String,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec {
            template: DEFAULT_TEMPLATE.to_string(),
            product: DEFAULT_PRODUCT.to_string(),
        }
    }
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.template.matches(DESCRIPTOR_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::config(format!(
                "prompt template must contain the placeholder {DESCRIPTOR_PLACEHOLDER} exactly once, found {n}: {:?}",
                self.template
            )));
        }
        Ok(())
    }
}

/// Renders the prompt for one group. `{product}` is substituted anywhere in
/// the template; the descriptor goes into the single `{}`.
pub fn build_prompt(group: &TargetGroup, spec: &PromptSpec) -> Result<String> {
    spec.validate()?;
    if group.descriptor.trim().is_empty() {
        return Err(Error::config(format!(
            "target group '{}' has an empty descriptor",
            group.id
        )));
    }
    let (head, tail) = spec
        .template
        .split_once(DESCRIPTOR_PLACEHOLDER)
        .expect("validated template has a placeholder");
    let head = head.replace(PRODUCT_PLACEHOLDER, &spec.product);
    let tail = tail.replace(PRODUCT_PLACEHOLDER, &spec.product);
    Ok(format!("{head}{}{tail}", group.descriptor))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slogan {
    pub group_id: String,
    pub index: usize,
    pub prompt: String,
    pub text: String,
    pub model: String,
    #[serde(with = "utc_seconds")]
    pub created_at: DateTime<Utc>,
}

/// Timestamps are stored as `YYYY-MM-DDTHH:MM:SSZ`.
pub mod utc_seconds {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        let parsed = DateTime::parse_from_rfc3339(&raw).map_err(serde::de::Error::custom)?;
        Ok(super::truncate_to_seconds(parsed.with_timezone(&Utc)))
    }
}

pub fn truncate_to_seconds(ts: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_opt(ts.timestamp(), 0)
        .single()
        .expect("whole-second timestamp is representable")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    EmptyText,
    DuplicateKey { group_id: String, index: usize },
    UnknownGroup(String),
}

/// One rejected record (or pair, for duplicates), with 1-based line numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub lines: Vec<usize>,
    pub kind: IssueKind,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lines = self
            .lines
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(" and ");
        match &self.kind {
            IssueKind::EmptyText => write!(f, "line {lines}: slogan text is empty"),
            IssueKind::DuplicateKey { group_id, index } => {
                write!(f, "lines {lines}: duplicate (group_id, index) = ({group_id}, {index})")
            }
            IssueKind::UnknownGroup(g) => write!(f, "line {lines}: unknown group_id '{g}'"),
        }
    }
}

/// Checks every record against the corpus invariants. Records are paired with
/// their line number (or any caller-chosen ordinal).
pub fn validate_records(records: &[(usize, Slogan)], taxonomy: &Taxonomy) -> Vec<ValidationIssue> {
    let known: HashSet<&str> = taxonomy.groups.iter().map(|g| g.id.as_str()).collect();
    let mut first_seen: HashMap<(&str, usize), usize> = HashMap::new();
    let mut issues = Vec::new();
    for (line, s) in records {
        if s.text.trim().is_empty() {
            issues.push(ValidationIssue {
                lines: vec![*line],
                kind: IssueKind::EmptyText,
            });
        }
        if !known.contains(s.group_id.as_str()) {
            issues.push(ValidationIssue {
                lines: vec![*line],
                kind: IssueKind::UnknownGroup(s.group_id.clone()),
            });
        }
        match first_seen.get(&(s.group_id.as_str(), s.index)) {
            Some(first) => issues.push(ValidationIssue {
                lines: vec![*first, *line],
                kind: IssueKind::DuplicateKey {
                    group_id: s.group_id.clone(),
                    index: s.index,
                },
            }),
            None => {
                first_seen.insert((s.group_id.as_str(), s.index), *line);
            }
        }
    }
    issues
}

/// A validated slogan collection, always sorted by `(group_id, index)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    slogans: Vec<Slogan>,
}

impl Corpus {
    pub fn new(slogans: Vec<Slogan>, taxonomy: &Taxonomy) -> Result<Self> {
        let numbered: Vec<(usize, Slogan)> = slogans.into_iter().enumerate().collect();
        Self::from_numbered(numbered, taxonomy)
    }

    fn from_numbered(records: Vec<(usize, Slogan)>, taxonomy: &Taxonomy) -> Result<Self> {
        let issues = validate_records(&records, taxonomy);
        if !issues.is_empty() {
            return Err(Error::Validation {
                issues: issues.iter().map(ToString::to_string).collect(),
            });
        }
        let mut slogans: Vec<Slogan> = records.into_iter().map(|(_, s)| s).collect();
        slogans.sort_by(|a, b| (&a.group_id, a.index).cmp(&(&b.group_id, b.index)));
        Ok(Corpus { slogans })
    }

    pub fn slogans(&self) -> &[Slogan] {
        &self.slogans
    }

    pub fn len(&self) -> usize {
        self.slogans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slogans.is_empty()
    }

    /// Slogans of one group in index order.
    pub fn group(&self, group_id: &str) -> impl Iterator<Item = &Slogan> {
        let group_id = group_id.to_string();
        self.slogans.iter().filter(move |s| s.group_id == group_id)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.slogans {
            out.push_str(&serde_json::to_string(s).expect("slogan serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 over every slogan's key, prompt, text and model. Timestamps are
    /// left out so that regenerating the same corpus later gives the same
    /// digest.
    pub fn digest(&self) -> String {
        let mut buf = String::new();
        for s in &self.slogans {
            let row = serde_json::json!([s.group_id, s.index, s.prompt, s.text, s.model]);
            buf.push_str(&row.to_string());
            buf.push('\n');
        }
        sha256_hex(buf.as_bytes())
    }
}

pub fn load_corpus(path: &Path, taxonomy: &Taxonomy) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let slogan: Slogan = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, slogan));
    }
    Corpus::from_numbered(records, taxonomy)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(corpus.to_jsonl().as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()
    }

    fn slogan(group: &str, index: usize, text: &str) -> Slogan {
        Slogan {
            group_id: group.into(),
            index,
            prompt: "p".into(),
            text: text.into(),
            model: "m".into(),
            created_at: ts(),
        }
    }

    #[test]
    fn digest_ignores_timestamps() {
        let t = Taxonomy::default();
        let a = Corpus::new(vec![slogan("male", 0, "Save")], &t).unwrap();
        let mut later = slogan("male", 0, "Save");
        later.created_at = Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap();
        let b = Corpus::new(vec![later], &t).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = Corpus::new(vec![slogan("male", 0, "Save!")], &t).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn default_taxonomy_shape() {
        let t = Taxonomy::default();
        t.validate().unwrap();
        assert_eq!(t.categories.len(), 6);
        assert_eq!(t.groups.len(), 17);
        assert_eq!(t.targets().count(), 16);
        assert_eq!(t.baseline().descriptor, "any individual");
    }

    #[test]
    fn baseline_prompt() {
        let t = Taxonomy::default();
        let p = build_prompt(t.baseline(), &PromptSpec::default()).unwrap();
        assert_eq!(
            p,
            "Create a marketing slogan for a savings product targeting any individual"
        );
    }

    #[test]
    fn male_prompt() {
        let t = Taxonomy::default();
        let p = build_prompt(t.group("male").unwrap(), &PromptSpec::default()).unwrap();
        assert_eq!(
            p,
            "Create a marketing slogan for a savings product targeting a male individual"
        );
    }

    #[test]
    fn direct_substitution() {
        let g = TargetGroup {
            id: "x".into(),
            category: "c".into(),
            descriptor: "X".into(),
            is_baseline: false,
        };
        let spec = PromptSpec {
            template: "T {} Z".into(),
            product: "ignored".into(),
        };
        assert_eq!(build_prompt(&g, &spec).unwrap(), "T X Z");
    }

    #[test]
    fn malformed_templates_rejected() {
        let g = Taxonomy::default().baseline().clone();
        for template in ["no placeholder", "{} and {}"] {
            let spec = PromptSpec {
                template: template.into(),
                product: DEFAULT_PRODUCT.into(),
            };
            assert!(matches!(build_prompt(&g, &spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn taxonomy_requires_single_baseline() {
        let mut t = Taxonomy::default();
        t.groups[1].is_baseline = true;
        assert!(t.validate().is_err());
        t.groups[1].is_baseline = false;
        t.groups[0].is_baseline = false;
        assert!(t.validate().is_err());
    }

    #[test]
    fn taxonomy_rejects_uppercase_and_duplicate_ids() {
        let mut t = Taxonomy::default();
        t.categories[1].id = "Gender".into();
        assert!(t.validate().is_err());
        let mut t = Taxonomy::default();
        t.groups[2].id = "male".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn corpus_sorts_by_group_and_index() {
        let t = Taxonomy::default();
        let c = Corpus::new(
            vec![slogan("male", 1, "b"), slogan("female", 0, "c"), slogan("male", 0, "a")],
            &t,
        )
        .unwrap();
        let keys: Vec<_> = c.slogans().iter().map(|s| (s.group_id.as_str(), s.index)).collect();
        assert_eq!(keys, vec![("female", 0), ("male", 0), ("male", 1)]);
    }

    #[test]
    fn whitespace_text_rejected() {
        let t = Taxonomy::default();
        let err = Corpus::new(vec![slogan("male", 0, "  \t")], &t).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn timestamp_format() {
        assert_eq!(utc_seconds::format(&ts()), "2024-05-01T12:00:00Z");
        let json = serde_json::to_string(&slogan("male", 0, "x")).unwrap();
        assert_eq!(
            json,
            r#"{"group_id":"male","index":0,"prompt":"p","text":"x","model":"m","created_at":"2024-05-01T12:00:00Z"}"#
        );
    }

    #[test]
    fn duplicate_texts_allowed() {
        let t = Taxonomy::default();
        Corpus::new(vec![slogan("male", 0, "same"), slogan("male", 1, "same")], &t).unwrap();
    }
}
