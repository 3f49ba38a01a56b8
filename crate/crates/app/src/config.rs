//! Project configuration file.
//!
//! A single TOML document; every value can be overridden by a command-line flag. Relative
//! paths are resolved against the directory holding the file. Credentials are never read
//! from here: the backend token comes from the environment variable named by
//! `backend.api_key_env`.
//!
//! ```toml
//! project_root = "."
//! category = "wood stain products"
//! seed = 7
//!
//! [backend]
//! endpoint_url = "http://localhost:8000/v1/chat/completions"
//! model_name = "voc-sft"
//! max_in_flight = 8
//!
//! [dataset]
//! ratio = 0.8
//! negative_count = 47
//!
//! [coverage]
//! b = 50
//! m = 2000
//! n_max = 80
//!
//! [study]
//! bind = "127.0.0.1:8080"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voc_core::coverage::FitMethod;
use voc_gateway::BackendConfig;

use crate::error::{AppError, AppResult};

pub const DEFAULT_CONFIG_FILE: &str = "voc.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub max_in_flight: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
    pub backoff_base_ms: Option<u64>,
    pub backoff_max_ms: Option<u64>,
    pub decoding: Option<BTreeMap<String, serde_json::Value>>,
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub ratio: Option<f64>,
    pub negative_count: Option<usize>,
    pub probe_count: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub b: Option<u32>,
    pub m: Option<u32>,
    pub n_max: Option<u32>,
    pub resamples: Option<u32>,
    pub method: Option<FitMethod>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub root: Option<PathBuf>,
    pub bind: Option<String>,
    pub static_dir: Option<PathBuf>,
    pub rater_tokens: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub project_root: Option<PathBuf>,
    pub category: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub coverage: CoverageSection,
    #[serde(default)]
    pub study: StudySection,
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone, Default)]
pub struct LoadedConfig {
    pub config: ProjectConfig,
    pub path: Option<PathBuf>,
}

impl LoadedConfig {
    /// Loads `explicit`, or `voc.toml` in the working directory when present.
    pub fn load(explicit: Option<&Path>) -> AppResult<Self> {
        let path = match explicit {
            Some(p) => p.to_owned(),
            None => {
                let default = PathBuf::from(DEFAULT_CONFIG_FILE);
                if !default.is_file() {
                    return Ok(LoadedConfig::default());
                }
                default
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|e| AppError::usage(format!("config {}: {e}", path.display())))?;
        let mut config: ProjectConfig =
            toml::from_str(&text).map_err(|e| AppError::usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        if config.project_root.is_none() {
            config.project_root = Some(base.clone());
        }
        resolve(&mut config.project_root);
        resolve(&mut config.study.root);
        resolve(&mut config.study.static_dir);
        resolve(&mut config.study.rater_tokens);
        Ok(LoadedConfig { config, path: Some(path) })
    }

    pub fn project_root(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_owned)
            .or_else(|| self.config.project_root.clone().filter(|p| !p.as_os_str().is_empty()))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Backend settings: flags over config; endpoint and model are required.
    pub fn backend(&self, overrides: &BackendSection) -> AppResult<BackendConfig> {
        let c = &self.config.backend;
        let endpoint = overrides.endpoint_url.clone().or_else(|| c.endpoint_url.clone());
        let model = overrides.model_name.clone().or_else(|| c.model_name.clone());
        let (Some(endpoint), Some(model)) = (endpoint, model) else {
            return Err(AppError::usage("a backend endpoint and model are required (--endpoint/--model or [backend] in the config)"));
        };
        let mut config = BackendConfig::new(&endpoint, &model);
        macro_rules! pick {
            ($field:ident) => {
                if let Some(v) = overrides.$field.clone().or_else(|| c.$field.clone()) {
                    config.$field = v;
                }
            };
        }
        pick!(max_in_flight);
        pick!(timeout_secs);
        pick!(max_retries);
        pick!(backoff_base_ms);
        pick!(backoff_max_ms);
        pick!(decoding);
        pick!(api_key_env);
        config.validate()?;
        Ok(config)
    }
}
