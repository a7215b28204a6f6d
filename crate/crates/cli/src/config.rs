//! Pipeline configuration.
//!
//! Precedence, lowest first: built-in defaults, the TOML config file,
//! `NARRATIVE__SECTION__KEY=value` environment variables, `--set
//! section.key=value` flags, then the dedicated `--seed` / `--artifacts`
//! flags. The global seed is copied into every module seed.

use std::path::{Path, PathBuf};

use narrative_core::chains::ChainConfig;
use narrative_core::clustering::KMeansConfig;
use narrative_core::framing::{LdaConfig, NeuralHeadConfig};
use narrative_core::kg_distill::DistillConfig;
use narrative_core::nn::LogisticConfig;
use narrative_core::relation_model::ClassifierConfig;
use narrative_core::store;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "NARRATIVE__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub artifacts: PathBuf,
    pub corpus: CorpusSettings,
    pub events: EventSettings,
    pub kg: KgSettings,
    pub providers: ProviderSettings,
    pub relation: ClassifierConfig,
    pub chains: ChainSettings,
    pub expansion: ExpansionSettings,
    pub clustering: ClusteringSettings,
    pub framing: FramingSettings,
    pub lda: LdaConfig,
    pub neural: NeuralHeadConfig,
    pub intrusion: IntrusionSettings,
    pub mi: MiSettings,
    pub evaluation: EvaluationSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            artifacts: PathBuf::from("artifacts"),
            corpus: CorpusSettings::default(),
            events: EventSettings::default(),
            kg: KgSettings::default(),
            providers: ProviderSettings::default(),
            relation: ClassifierConfig::default(),
            chains: ChainSettings::default(),
            expansion: ExpansionSettings::default(),
            clustering: ClusteringSettings::default(),
            framing: FramingSettings::default(),
            lda: LdaConfig::default(),
            neural: NeuralHeadConfig::default(),
            intrusion: IntrusionSettings::default(),
            mi: MiSettings::default(),
            evaluation: EvaluationSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub path: PathBuf,
    pub parses: PathBuf,
    pub labels: Vec<String>,
    /// Used only when the records carry no split.
    pub test_fraction: f64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            path: PathBuf::from("corpus.jsonl"),
            parses: PathBuf::from("corpus.conllu"),
            labels: Vec::new(),
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSettings {
    pub salience_keep_fraction: f64,
}

impl Default for EventSettings {
    fn default() -> Self {
        EventSettings { salience_keep_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgSettings {
    pub edges: PathBuf,
    pub phrase_parses: PathBuf,
    /// Word vectors for the static logistic-regression relation baseline.
    pub static_vectors: Option<PathBuf>,
    pub distill: DistillConfig,
}

impl Default for KgSettings {
    fn default() -> Self {
        KgSettings {
            edges: PathBuf::from("kg.jsonl"),
            phrase_parses: PathBuf::from("kg_phrases.conllu"),
            static_vectors: None,
            distill: DistillConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSettings {
    Stub {
        #[serde(default = "default_stub_dim")]
        dim: usize,
        #[serde(default = "default_stub_seed")]
        seed: u64,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_attempts")]
        max_attempts: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenerationSettings {
    Stub,
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_attempts")]
        max_attempts: u32,
    },
}

fn default_stub_dim() -> usize {
    64
}

fn default_stub_seed() -> u64 {
    42
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout() -> u64 {
    300
}

fn default_attempts() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub embedding: EmbeddingSettings,
    pub generation: GenerationSettings,
    /// Cache remote responses under `<artifacts>/cache`.
    pub cache: bool,
    pub embed_batch_size: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            embedding: EmbeddingSettings::Stub { dim: default_stub_dim(), seed: default_stub_seed() },
            generation: GenerationSettings::Stub,
            cache: true,
            embed_batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSettings {
    pub max_pairs: Option<usize>,
    pub confidence_threshold: f64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        let c = ChainConfig::default();
        ChainSettings { max_pairs: c.max_pairs, confidence_threshold: c.confidence_threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionKind {
    Llm,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionSettings {
    pub method: ExpansionKind,
    pub parallelism: usize,
    pub max_tokens: usize,
    pub temperature: f64,
}

impl Default for ExpansionSettings {
    fn default() -> Self {
        ExpansionSettings {
            method: ExpansionKind::Llm,
            parallelism: 4,
            max_tokens: narrative_core::providers::DEFAULT_MAX_TOKENS,
            temperature: narrative_core::providers::DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSettings {
    pub ks: Vec<usize>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ClusteringSettings {
    fn default() -> Self {
        let k = KMeansConfig::default();
        ClusteringSettings { ks: narrative_core::clustering::DEFAULT_KS.to_vec(), max_iters: k.max_iters, tol: k.tol }
    }
}

impl ClusteringSettings {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig { max_iters: self.max_iters, tol: self.tol }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FramingSettings {
    /// Cluster count for the neural head, intrusion items and the MI
    /// report; the best k of `train-frame-lr` when unset.
    pub k: Option<usize>,
    pub logistic: LogisticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrusionSettings {
    pub items: usize,
    pub top_fraction: f64,
    /// The two primary annotators whose agreement is reported.
    pub annotators: Vec<String>,
    /// Resolves conflicts between the primary annotators.
    pub resolver: Option<String>,
}

impl Default for IntrusionSettings {
    fn default() -> Self {
        IntrusionSettings {
            items: 40,
            top_fraction: 0.25,
            annotators: vec!["a1".into(), "a2".into()],
            resolver: Some("a3".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiSettings {
    pub top_n: usize,
    /// Expansions shown per reported cluster.
    pub examples: usize,
}

impl Default for MiSettings {
    fn default() -> Self {
        MiSettings { top_n: 5, examples: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub folds: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings { folds: 5 }
    }
}

/// Command-line inputs that shape the configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub artifacts: Option<PathBuf>,
    pub set: Vec<String>,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value` in `table`, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("invalid config key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur =
            entry.as_table_mut().ok_or_else(|| CliError::Usage(format!("config key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            Some((rest.split("__").map(str::to_lowercase).collect::<Vec<_>>().join("."), v))
        })
        .collect();
    out.sort();
    out
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        Self::load_with_env(o, std::env::vars())
    }

    pub fn load_with_env(o: &Overrides, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let (mut table, base) = match &o.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                let table: toml::Table = toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
                (table, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        for (k, v) in env_overrides(env) {
            set_dotted(&mut table, &k, &v)?;
        }
        for s in &o.set {
            let (k, v) =
                s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{s}`")))?;
            set_dotted(&mut table, k.trim(), v.trim())?;
        }
        let mut cfg: PipelineConfig =
            table.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("invalid configuration: {e}")))?;
        for p in [
            &mut cfg.corpus.path,
            &mut cfg.corpus.parses,
            &mut cfg.kg.edges,
            &mut cfg.kg.phrase_parses,
            &mut cfg.artifacts,
        ] {
            resolve(&base, p);
        }
        if let Some(p) = cfg.kg.static_vectors.as_mut() {
            resolve(&base, p);
        }
        if let Some(seed) = o.seed {
            cfg.seed = seed;
        }
        if let Some(a) = &o.artifacts {
            cfg.artifacts = a.clone();
        }
        cfg.relation.seed = cfg.seed;
        cfg.lda.seed = cfg.seed;
        cfg.kg.distill.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.corpus.labels.is_empty() {
            return bad("corpus.labels must list the frame labels".into());
        }
        if self.clustering.ks.is_empty() || self.clustering.ks.contains(&0) {
            return bad("clustering.ks must be non-empty positive integers".into());
        }
        if self.intrusion.annotators.len() != 2 {
            return bad("intrusion.annotators must name exactly two primary annotators".into());
        }
        if self.evaluation.folds < 2 {
            return bad("evaluation.folds must be at least 2".into());
        }
        Ok(())
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            max_pairs: self.chains.max_pairs,
            confidence_threshold: self.chains.confidence_threshold,
            seed: self.seed,
        }
    }

    pub fn hash(&self) -> String {
        hash_value(self)
    }
}

/// SHA-256 of the canonical JSON form.
pub fn hash_value<T: Serialize>(value: &T) -> String {
    store::sha256_hex(serde_json::to_vec(value).expect("config serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("c.toml");
        std::fs::write(&p, body).unwrap();
        p
    }

    fn overrides(config: PathBuf) -> Overrides {
        Overrides { config: Some(config), ..Default::default() }
    }

    const BASE: &str = "seed = 7\n[corpus]\nlabels = [\"A\", \"B\"]\n[clustering]\nks = [2, 3]\n";

    #[test]
    fn precedence_file_env_set_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), BASE);
        let cfg = PipelineConfig::load_with_env(&overrides(path.clone()), []).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.relation.seed, 7);
        assert_eq!(cfg.corpus.path, dir.path().join("corpus.jsonl"));

        let env =
            [("NARRATIVE__SEED".to_string(), "8".to_string()), ("NARRATIVE__CLUSTERING__KS".into(), "[4]".into())];
        let cfg = PipelineConfig::load_with_env(&overrides(path.clone()), env.clone()).unwrap();
        assert_eq!((cfg.seed, cfg.clustering.ks.clone()), (8, vec![4]));

        let mut o = overrides(path);
        o.set = vec!["seed=9".into(), "relation.learning_rate = 0.01".into()];
        let cfg = PipelineConfig::load_with_env(&o, env.clone()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.relation.learning_rate, 0.01);
        o.seed = Some(10);
        assert_eq!(PipelineConfig::load_with_env(&o, env).unwrap().seed, 10);
    }

    #[test]
    fn unknown_keys_and_bad_sets_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), &format!("{BASE}[chains]\nbogus = 1\n"));
        assert!(matches!(PipelineConfig::load_with_env(&overrides(path), []), Err(CliError::Usage(_))));
        let path = write(dir.path(), BASE);
        let mut o = overrides(path);
        o.set = vec!["novalue".into()];
        assert!(matches!(PipelineConfig::load_with_env(&o, []), Err(CliError::Usage(_))));
    }

    #[test]
    fn provider_kinds_parse() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{BASE}[providers.embedding]\nkind = \"http\"\nendpoint = \"http://x\"\nmodel = \"m\"\n[providers.generation]\nkind = \"stub\"\n"
        );
        let cfg = PipelineConfig::load_with_env(&overrides(write(dir.path(), &body)), []).unwrap();
        assert!(matches!(cfg.providers.embedding, EmbeddingSettings::Http { max_attempts: 4, .. }));
        assert_eq!(cfg.providers.generation, GenerationSettings::Stub);
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig {
            corpus: CorpusSettings { labels: vec!["A".into()], ..Default::default() },
            ..Default::default()
        };
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
