//! The experiment configuration file.
//!
//! Every section is optional and overrides only the keys it names; the
//! rest come from the presets. A minimal file:
//!
//! ```toml
//! out = "runs/synthetic"
//! seed = 7
//! families = ["forest", "recurrent"]
//! regimes = ["claim", "evidence", "claim+evidence"]
//!
//! [[datasets]]
//! name = "snopes"
//! scheme = "snopes"
//! path = "data/snopes.jsonl"
//!
//! [[datasets]]
//! name = "synthetic"
//! synthetic = { n = 2000, leakage = 0.8 }
//!
//! [recurrent_grid]
//! learning_rate = [5e-4]
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use factprobe::corpus::{LabelScheme, LeakageSpec, SplitRatios};
use factprobe::forest::{ForestConfig, ForestGrid};
use factprobe::neural::{ContextualGrid, RecurrentGrid, TrainConfig};
use factprobe::probes::{Family, FeatureSettings, Hyper, InputRegime, TransformerArch};
use factprobe::seed;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::Table;

use crate::error::{CliError, CliResult};

/// Where a dataset's records come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    /// One JSON record per line.
    Jsonl(PathBuf),
    /// A MultiFC export: the claims TSV, the snippet directory and the claim
    /// id prefix selecting one site.
    MultiFc {
        tsv: PathBuf,
        snippets: PathBuf,
        prefix: String,
    },
    Synthetic {
        spec: LeakageSpec,
        seed: u64,
    },
}

impl DatasetSource {
    pub fn describe(&self) -> String {
        match self {
            DatasetSource::Jsonl(p) => format!("jsonl:{}", p.display()),
            DatasetSource::MultiFc { tsv, prefix, .. } => format!("multifc:{}:{prefix}", tsv.display()),
            DatasetSource::Synthetic { spec, seed } => format!(
                "synthetic:n={} leakage={} rank_decay={} claim_signal={} seed={seed}",
                spec.n, spec.leakage, spec.rank_decay, spec.claim_signal
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub name: String,
    pub scheme: LabelScheme,
    pub source: DatasetSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub families: Vec<Family>,
    pub regimes: Vec<InputRegime>,
    /// Run grid cells on the thread pool.
    pub parallel: bool,
    /// When false only the preset configuration of each family is trained.
    pub grid_search: bool,
    pub datasets: Vec<DatasetConfig>,
    pub split: SplitRatios,
    pub features: FeatureSettings,
    pub forest: ForestConfig,
    pub forest_grid: ForestGrid,
    pub recurrent: TrainConfig,
    pub recurrent_grid: RecurrentGrid,
    pub contextual: TrainConfig,
    pub contextual_grid: ContextualGrid,
    pub transformer: TransformerArch,
    /// Defaults for synthetic datasets and for the `synth` command.
    pub synth: LeakageSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out: PathBuf::from("factprobe-out"),
            seed: 0,
            families: Family::ALL.to_vec(),
            regimes: InputRegime::ALL.to_vec(),
            parallel: false,
            grid_search: true,
            datasets: Vec::new(),
            split: SplitRatios::default(),
            features: FeatureSettings::default(),
            forest: ForestConfig::best(),
            forest_grid: ForestGrid::default(),
            recurrent: TrainConfig::recurrent(),
            recurrent_grid: RecurrentGrid::default(),
            contextual: TrainConfig::contextual(),
            contextual_grid: ContextualGrid::default(),
            transformer: TransformerArch::default(),
            synth: LeakageSpec::default(),
        }
    }
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    out: Option<PathBuf>,
    seed: Option<u64>,
    families: Option<Vec<String>>,
    regimes: Option<Vec<String>>,
    parallel: Option<bool>,
    grid_search: Option<bool>,
    datasets: Vec<RawDataset>,
    split: Option<Table>,
    features: Option<Table>,
    forest: Option<Table>,
    forest_grid: Option<Table>,
    recurrent: Option<Table>,
    recurrent_grid: Option<Table>,
    contextual: Option<Table>,
    contextual_grid: Option<Table>,
    transformer: Option<Table>,
    synth: Option<Table>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    name: String,
    scheme: Option<String>,
    path: Option<PathBuf>,
    multifc_tsv: Option<PathBuf>,
    multifc_snippets: Option<PathBuf>,
    multifc_prefix: Option<String>,
    /// Overrides of `[synth]`; may also carry `seed`.
    synthetic: Option<Table>,
}

/// Applies the keys of `table` on top of `base`. Keys the target type does
/// not know are rejected.
fn overlay<T: Serialize + DeserializeOwned>(section: &str, base: T, table: Option<Table>) -> CliResult<T> {
    let Some(table) = table else { return Ok(base) };
    let bad = |e: String| CliError::Usage(format!("[{section}]: {e}"));
    let mut merged = match toml::Value::try_from(&base).map_err(|e| bad(e.to_string()))? {
        toml::Value::Table(t) => t,
        _ => return Err(bad("not a table".into())),
    };
    let keys: Vec<String> = table.keys().cloned().collect();
    merged.extend(table);
    let value: T = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| bad(e.to_string()))?;
    if let toml::Value::Table(known) = toml::Value::try_from(&value).map_err(|e| bad(e.to_string()))? {
        if let Some(k) = keys.iter().find(|k| !known.contains_key(*k)) {
            return Err(bad(format!("unknown key '{k}'")));
        }
    }
    Ok(value)
}

pub fn parse_families(items: &[String]) -> CliResult<Vec<Family>> {
    let mut out: Vec<Family> = Vec::new();
    for s in items.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let f = Family::from_str(s).map_err(|e| CliError::Usage(e.to_string()))?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out.sort();
    Ok(out)
}

pub fn parse_regimes(items: &[String]) -> CliResult<Vec<InputRegime>> {
    let mut out: Vec<InputRegime> = Vec::new();
    for s in items.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let r = InputRegime::from_str(s).map_err(|e| CliError::Usage(e.to_string()))?;
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out.sort();
    Ok(out)
}

fn rebase(base_dir: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base_dir.join(p)
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && name != "."
        && name != ".."
}

impl ExperimentConfig {
    /// Parses a configuration document. Relative paths are taken relative
    /// to `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let d = ExperimentConfig::default();
        let mut cfg = ExperimentConfig {
            out: raw.out.map(|p| rebase(base_dir, p)).unwrap_or(d.out),
            seed: raw.seed.unwrap_or(d.seed),
            families: match raw.families {
                Some(f) => parse_families(&f)?,
                None => d.families,
            },
            regimes: match raw.regimes {
                Some(r) => parse_regimes(&r)?,
                None => d.regimes,
            },
            parallel: raw.parallel.unwrap_or(d.parallel),
            grid_search: raw.grid_search.unwrap_or(d.grid_search),
            datasets: Vec::new(),
            split: overlay("split", d.split, raw.split)?,
            features: overlay("features", d.features, raw.features)?,
            forest: overlay("forest", d.forest, raw.forest)?,
            forest_grid: overlay("forest_grid", d.forest_grid, raw.forest_grid)?,
            recurrent: overlay("recurrent", d.recurrent, raw.recurrent)?,
            recurrent_grid: overlay("recurrent_grid", d.recurrent_grid, raw.recurrent_grid)?,
            contextual: overlay("contextual", d.contextual, raw.contextual)?,
            contextual_grid: overlay("contextual_grid", d.contextual_grid, raw.contextual_grid)?,
            transformer: overlay("transformer", d.transformer, raw.transformer)?,
            synth: overlay("synth", d.synth, raw.synth)?,
        };
        if let Some(p) = cfg.features.embeddings_path.take() {
            cfg.features.embeddings_path = Some(rebase(base_dir, p));
        }
        for ds in raw.datasets {
            let parsed = cfg.dataset(ds, base_dir)?;
            if cfg.datasets.iter().any(|d| d.name == parsed.name) {
                return Err(CliError::Usage(format!("dataset '{}' is listed twice", parsed.name)));
            }
            cfg.datasets.push(parsed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn dataset(&self, raw: RawDataset, base_dir: &Path) -> CliResult<DatasetConfig> {
        if !valid_name(&raw.name) {
            return Err(CliError::Usage(format!(
                "dataset name '{}' must be non-empty and use only letters, digits, '-', '_' or '.'",
                raw.name
            )));
        }
        let multifc = raw.multifc_tsv.is_some() || raw.multifc_snippets.is_some() || raw.multifc_prefix.is_some();
        let given = [raw.path.is_some(), multifc, raw.synthetic.is_some()];
        if given.iter().filter(|x| **x).count() != 1 {
            return Err(CliError::Usage(format!(
                "dataset '{}' needs exactly one of path, multifc_* or synthetic",
                raw.name
            )));
        }
        let source = if let Some(p) = raw.path {
            DatasetSource::Jsonl(rebase(base_dir, p))
        } else if multifc {
            match (raw.multifc_tsv, raw.multifc_snippets, raw.multifc_prefix) {
                (Some(tsv), Some(snippets), Some(prefix)) => DatasetSource::MultiFc {
                    tsv: rebase(base_dir, tsv),
                    snippets: rebase(base_dir, snippets),
                    prefix,
                },
                _ => {
                    return Err(CliError::Usage(format!(
                        "dataset '{}' needs multifc_tsv, multifc_snippets and multifc_prefix",
                        raw.name
                    )))
                }
            }
        } else {
            let mut table = raw.synthetic.unwrap_or_default();
            let seed = match table.remove("seed") {
                Some(toml::Value::Integer(s)) if s >= 0 => s as u64,
                Some(other) => return Err(CliError::Usage(format!("dataset '{}': bad seed {other}", raw.name))),
                None => seed::derive(self.seed, &[seed::tag(&raw.name)]),
            };
            let spec = overlay(
                &format!("datasets.{}.synthetic", raw.name),
                self.synth.clone(),
                Some(table),
            )?;
            spec.validate()?;
            DatasetSource::Synthetic { spec, seed }
        };
        let scheme = match (&raw.scheme, &source) {
            (Some(s), _) => {
                let path = rebase(base_dir, PathBuf::from(s));
                match LabelScheme::builtin(s) {
                    Some(b) => b,
                    None => LabelScheme::load(&path)?,
                }
            }
            (None, DatasetSource::Synthetic { spec, .. }) => spec.scheme(),
            (None, _) => match LabelScheme::builtin(&raw.name) {
                Some(b) => b,
                None => {
                    return Err(CliError::Usage(format!(
                        "dataset '{}' needs a scheme (built-in name or TOML file)",
                        raw.name
                    )))
                }
            },
        };
        if let DatasetSource::Synthetic { spec, .. } = &source {
            if spec.labels != scheme.labels {
                return Err(CliError::Usage(format!(
                    "dataset '{}': synthetic labels do not match scheme {}",
                    raw.name, scheme.name
                )));
            }
        }
        Ok(DatasetConfig {
            name: raw.name,
            scheme,
            source,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.families.is_empty() || self.regimes.is_empty() {
            return Err(CliError::Usage("at least one family and one regime are needed".into()));
        }
        self.forest.validate()?;
        self.recurrent.validate()?;
        self.contextual.validate()?;
        self.synth.validate()?;
        for h in self
            .candidates(Family::Forest)
            .iter()
            .chain(&self.candidates(Family::Recurrent))
            .chain(&self.candidates(Family::Contextual))
        {
            match h {
                Hyper::Forest(c) => c.validate()?,
                Hyper::Neural(c) => c.validate()?,
            }
        }
        if self.candidates(Family::Recurrent).is_empty()
            || self.candidates(Family::Contextual).is_empty()
            || self.candidates(Family::Forest).is_empty()
        {
            return Err(CliError::Usage("a hyperparameter grid is empty".into()));
        }
        Ok(())
    }

    /// Hyperparameter candidates for `family`, in grid order. Seeds are set
    /// per cell by the caller.
    pub fn candidates(&self, family: Family) -> Vec<Hyper> {
        match (family, self.grid_search) {
            (Family::Forest, true) => self
                .forest_grid
                .configs(&self.forest)
                .into_iter()
                .map(Hyper::Forest)
                .collect(),
            (Family::Forest, false) => vec![Hyper::Forest(self.forest.clone())],
            (Family::Recurrent, true) => self
                .recurrent_grid
                .configs(&self.recurrent)
                .into_iter()
                .map(Hyper::Neural)
                .collect(),
            (Family::Recurrent, false) => vec![Hyper::Neural(self.recurrent.clone())],
            (Family::Contextual, true) => self
                .contextual_grid
                .configs(&self.contextual)
                .into_iter()
                .map(Hyper::Neural)
                .collect(),
            (Family::Contextual, false) => vec![Hyper::Neural(self.contextual.clone())],
        }
    }

    pub fn dataset_named(&self, name: &str) -> Option<&DatasetConfig> {
        self.datasets.iter().find(|d| d.name == name)
    }
}
