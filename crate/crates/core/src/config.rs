//! Run configuration. One JSON document describes the taxonomy, prompt,
//! generation settings and analysis options; every key is optional and falls
//! back to the built-in defaults. The same structure is echoed into
//! `report.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::{BiasOptions, DenominatorScope};
use crate::corpus::{DemographicCategory, PromptSpec, TargetGroup, Taxonomy, DEFAULT_PRODUCT, DEFAULT_TEMPLATE};
use crate::error::{Error, Result};
use crate::generate::{BackendKind, GenerationParams, PlantedPlan, DEFAULT_CACHE_DIR, DEFAULT_KEY_ENV};
use crate::lexicon::Lexicon;
use crate::stats::{KsOptions, PMethod, DEFAULT_PERMUTATION_ROUNDS};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const SYNTHETIC_MODEL: &str = "synthetic";

/// Backend selection without its seed; the run seed is applied when the
/// backend is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    HttpApi {
        #[serde(default = "default_endpoint")]
        endpoint: String,
        #[serde(default = "default_key_env")]
        key_env: String,
    },
    Replay {
        corpus_path: PathBuf,
    },
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<PlantedPlan>,
    },
}

fn default_endpoint() -> String {
    DEFAULT_ENDPOINT.to_string()
}

fn default_key_env() -> String {
    DEFAULT_KEY_ENV.to_string()
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::HttpApi {
            endpoint: default_endpoint(),
            key_env: default_key_env(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    /// Required for the HTTP backend; there is deliberately no default model.
    pub model: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub rate_limit: u32,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub cache_dir: Option<PathBuf>,
    pub backend: BackendConfig,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            model: None,
            temperature: 1.0,
            max_tokens: 500,
            rate_limit: 60,
            max_retries: 3,
            max_in_flight: 1,
            cache_dir: None,
            backend: BackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub categories: Vec<DemographicCategory>,
    pub groups: Vec<TargetGroup>,
    pub prompt_template: String,
    pub product: String,
    pub n_per_group: usize,
    pub generation: GenerationSettings,
    pub lexicon_path: Option<PathBuf>,
    pub corpus_path: Option<PathBuf>,
    pub baseline: Option<String>,
    pub denominator_scope: DenominatorScope,
    pub include_baseline: bool,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub p_method: PMethod,
    pub permutation_rounds: usize,
    pub alpha: Option<f64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        let taxonomy = Taxonomy::default();
        AuditConfig {
            categories: taxonomy.categories,
            groups: taxonomy.groups,
            prompt_template: DEFAULT_TEMPLATE.to_string(),
            product: DEFAULT_PRODUCT.to_string(),
            n_per_group: 100,
            generation: GenerationSettings::default(),
            lexicon_path: None,
            corpus_path: None,
            baseline: None,
            denominator_scope: DenominatorScope::All,
            include_baseline: false,
            out_dir: PathBuf::from("out"),
            seed: 0,
            p_method: PMethod::Asymptotic,
            permutation_rounds: DEFAULT_PERMUTATION_ROUNDS,
            alpha: None,
        }
    }
}

impl AuditConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy {
            categories: self.categories.clone(),
            groups: self.groups.clone(),
        }
    }

    pub fn prompt_spec(&self) -> PromptSpec {
        PromptSpec {
            template: self.prompt_template.clone(),
            product: self.product.clone(),
        }
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon_path {
            Some(p) => Lexicon::load(p),
            None => Ok(Lexicon::default()),
        }
    }

    pub fn bias_options(&self) -> BiasOptions {
        BiasOptions {
            scope: self.denominator_scope,
            include_baseline: self.include_baseline,
        }
    }

    pub fn ks_options(&self) -> KsOptions {
        KsOptions {
            method: self.p_method,
            permutation_rounds: self.permutation_rounds,
            seed: self.seed,
        }
    }

    pub fn backend_kind(&self) -> BackendKind {
        match &self.generation.backend {
            BackendConfig::HttpApi { endpoint, key_env } => BackendKind::HttpApi {
                endpoint: endpoint.clone(),
                key_env: key_env.clone(),
            },
            BackendConfig::Replay { corpus_path } => BackendKind::Replay {
                corpus_path: corpus_path.clone(),
            },
            BackendConfig::Synthetic { plan } => BackendKind::Synthetic {
                seed: self.seed,
                plan: plan.clone(),
            },
        }
    }

    pub fn generation_params(&self) -> Result<GenerationParams> {
        let model = match (&self.generation.model, &self.generation.backend) {
            (Some(m), _) => m.clone(),
            (None, BackendConfig::Synthetic { .. }) => SYNTHETIC_MODEL.to_string(),
            (None, BackendConfig::Replay { .. }) => "replay".to_string(),
            (None, BackendConfig::HttpApi { .. }) => {
                return Err(Error::config(
                    "generation.model is required for the HTTP backend (use --model)",
                ))
            }
        };
        let params = GenerationParams {
            model,
            temperature: self.generation.temperature,
            max_tokens: self.generation.max_tokens,
            n_per_group: self.n_per_group,
            seed: Some(self.seed),
            rate_limit: self.generation.rate_limit,
            max_retries: self.generation.max_retries,
        };
        params.validate()?;
        Ok(params)
    }

    /// HTTP runs cache under `.slogan-cache/` unless told otherwise; other
    /// backends cache only when a directory is configured.
    pub fn effective_cache_dir(&self) -> Option<PathBuf> {
        match (&self.generation.cache_dir, &self.generation.backend) {
            (Some(d), _) => Some(d.clone()),
            (None, BackendConfig::HttpApi { .. }) => Some(PathBuf::from(DEFAULT_CACHE_DIR)),
            (None, _) => None,
        }
    }

    /// Checks everything that can be checked without touching the network.
    pub fn validate(&self) -> Result<()> {
        self.taxonomy().validate()?;
        self.prompt_spec().validate()?;
        let mut issues = Vec::new();
        if self.n_per_group < 1 {
            issues.push("n_per_group must be >= 1".to_string());
        }
        if self.permutation_rounds < 1 {
            issues.push("permutation_rounds must be >= 1".to_string());
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                issues.push(format!("alpha must be in (0, 1), got {a}"));
            }
        }
        if let Some(b) = &self.baseline {
            if self.taxonomy().group(b).is_none() {
                issues.push(format!("baseline '{b}' is not a group of the taxonomy"));
            }
        }
        for p in [&self.lexicon_path, &self.corpus_path].into_iter().flatten() {
            if !p.is_file() {
                issues.push(format!("file {} does not exist", p.display()));
            }
        }
        if let BackendConfig::Replay { corpus_path } = &self.generation.backend {
            if !corpus_path.is_file() {
                issues.push(format!("replay corpus {} does not exist", corpus_path.display()));
            }
        }
        if self.out_dir.exists() && !self.out_dir.is_dir() {
            issues.push(format!("output path {} is not a directory", self.out_dir.display()));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::config(issues.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c: AuditConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, AuditConfig::default());
    }

    #[test]
    fn json_round_trip() {
        let mut c = AuditConfig {
            alpha: Some(0.05),
            ..AuditConfig::default()
        };
        c.generation.model = Some("gpt-x".into());
        c.generation.backend = BackendConfig::Synthetic { plan: None };
        c.denominator_scope = DenominatorScope::PerCategory;
        let back: AuditConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn http_needs_a_model() {
        assert!(AuditConfig::default().generation_params().is_err());
        let mut c = AuditConfig::default();
        c.generation.backend = BackendConfig::Synthetic { plan: None };
        assert_eq!(c.generation_params().unwrap().model, "synthetic");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<AuditConfig>(r#"{"nper":3}"#).is_err());
    }

    #[test]
    fn bad_alpha_rejected() {
        let c = AuditConfig {
            alpha: Some(1.5),
            ..AuditConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
