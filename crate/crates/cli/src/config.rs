//! Run configuration: a TOML file with `[run]`, `[episode]` and `[remote]`
//! sections, overridden by command-line flags.

use std::path::{Path, PathBuf};

use crafter_coop::env::ENCODING_VERSION;
use crafter_coop::harness::FORMAT_VERSION;
use crafter_coop::policy::{BaselineKind, RemoteConfig, API_KEY_ENV};
use crafter_coop::world::EpisodeConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// First seed; run `i` uses `seed + i`.
    pub seed: u64,
    pub agents: u32,
    pub baseline: BaselineKind,
    pub backend: BackendKind,
    pub runs: u64,
    pub out: PathBuf,
    /// Optional cross-check; must agree with the baseline when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub communication: Option<bool>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            agents: 1,
            baseline: BaselineKind::Mem,
            backend: BackendKind::Scripted,
            runs: 1,
            out: PathBuf::from("runs/latest"),
            communication: None,
        }
    }
}

/// Everything a run needs, after file values and flags are merged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run: RunSection,
    pub episode: EpisodeConfig,
    pub remote: RemoteConfig,
}

/// Format versions written next to the resolved spec.
#[derive(Debug, Serialize)]
struct Versions {
    crate_version: &'static str,
    record_format: u32,
    observation_encoding: u32,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub agents: Option<u32>,
    pub baseline: Option<BaselineKind>,
    pub backend: Option<BackendKind>,
    pub runs: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_ticks: Option<u64>,
}

const RESERVED_EPISODE_KEYS: [(&str, &str); 2] = [("seed", "run.seed"), ("n_agents", "run.agents")];

impl RunSpec {
    /// Parse a config document. `origin` names it in diagnostics.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        let usage = |msg: String| CliError::Usage(format!("{origin}: {msg}"));
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| usage(e.message().to_string()))?;
        for key in doc.keys() {
            // `versions` is informational and written by `run`.
            if !["run", "episode", "remote", "versions"].contains(&key.as_str()) {
                return Err(usage(format!("unknown section `{key}` (expected run, episode or remote)")));
            }
        }
        let section = |name: &str| -> Result<toml::Value, CliError> {
            match doc.get(name) {
                None => Ok(toml::Value::Table(toml::Table::new())),
                Some(v @ toml::Value::Table(_)) => Ok(v.clone()),
                Some(_) => Err(usage(format!("`{name}` must be a section"))),
            }
        };

        let remote_value = section("remote")?;
        if let Some(t) = remote_value.as_table() {
            if t.keys().any(|k| k.contains("key") || k.contains("token")) {
                return Err(usage(format!(
                    "credentials are not accepted in config files; set {API_KEY_ENV} instead"
                )));
            }
        }
        let episode_value = section("episode")?;
        let known = toml::Value::try_from(EpisodeConfig::default()).expect("episode config serializes");
        let known = known.as_table().expect("episode config is a table");
        for key in episode_value.as_table().into_iter().flat_map(|t| t.keys()) {
            if let Some((_, instead)) = RESERVED_EPISODE_KEYS.iter().find(|(k, _)| k == key) {
                return Err(usage(format!("set `{instead}` instead of `episode.{key}`")));
            }
            if !known.contains_key(key) {
                return Err(usage(format!("unknown key `episode.{key}`")));
            }
        }

        let run: RunSection = section("run")?.try_into().map_err(|e: toml::de::Error| usage(e.message().to_string()))?;
        let episode: EpisodeConfig =
            episode_value.try_into().map_err(|e: toml::de::Error| usage(e.message().to_string()))?;
        let remote: RemoteConfig = remote_value
            .try_into()
            .map_err(|e: toml::de::Error| usage(e.message().to_string()))?;
        Ok(Self { run, episode, remote })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Apply flags, fill derived episode fields and check the combination.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(v) = o.seed {
            self.run.seed = v;
        }
        if let Some(v) = o.agents {
            self.run.agents = v;
        }
        if let Some(v) = o.baseline {
            self.run.baseline = v;
        }
        if let Some(v) = o.backend {
            self.run.backend = v;
        }
        if let Some(v) = o.runs {
            self.run.runs = v;
        }
        if let Some(v) = &o.out {
            self.run.out = v.clone();
        }
        if let Some(v) = o.max_ticks {
            self.episode.max_ticks = v;
        }
        self.episode.n_agents = self.run.agents;
        self.episode.seed = self.run.seed;

        if self.run.runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".to_string()));
        }
        if self.run.agents == 0 {
            return Err(CliError::Usage("agents must be at least 1".to_string()));
        }
        if self.episode.max_ticks == 0 {
            return Err(CliError::Usage("max-ticks must be at least 1".to_string()));
        }
        if let Some(comm) = self.run.communication {
            if comm != self.run.baseline.communicates() {
                return Err(CliError::Usage(format!(
                    "baseline {} {} communication but the config sets communication = {comm}",
                    self.run.baseline,
                    if self.run.baseline.communicates() { "requires" } else { "does not use" }
                )));
            }
        }
        if self.run.baseline.communicates() && self.run.agents < 2 {
            log::warn!("baseline mem_comm with a single agent sends no messages");
        }
        Ok(self)
    }

    pub fn episode_configs(&self) -> Vec<EpisodeConfig> {
        crafter_coop::harness::seed_range(&self.episode, self.run.seed, self.run.runs)
    }

    /// The resolved run settings plus format versions, as written into the run
    /// directory. The output is itself a valid config file.
    pub fn to_resolved_toml(&self) -> String {
        let mut doc = toml::Table::new();
        let versions = Versions {
            crate_version: env!("CARGO_PKG_VERSION"),
            record_format: FORMAT_VERSION,
            observation_encoding: ENCODING_VERSION,
        };
        doc.insert("versions".into(), toml::Value::try_from(versions).expect("versions serialize"));
        doc.insert("run".into(), toml::Value::try_from(&self.run).expect("run section serializes"));
        let mut episode = toml::Table::try_from(&self.episode).expect("episode serializes");
        for (key, _) in RESERVED_EPISODE_KEYS {
            episode.remove(key);
        }
        doc.insert("episode".into(), toml::Value::Table(episode));
        doc.insert("remote".into(), toml::Value::try_from(&self.remote).expect("remote serializes"));
        toml::to_string_pretty(&doc).expect("run spec serializes")
    }
}
