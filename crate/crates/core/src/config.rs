//! Run configuration: `key = value` text, overridable key by key.
//!
//! One global seed drives training, clustering, sub-sampling, splits and the
//! generator. Relative input paths default to files inside the work directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::clustering::{ClustererKind, ClustererSpec};
use crate::embeddings::{ModelKind, TrainConfig};
use crate::error::{Error, Result};
use crate::kg::TypePolicy;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeVectorSpec {
    /// Mean entity embedding per type.
    Centroid,
    File(PathBuf),
}

impl TypeVectorSpec {
    /// `centroid` or `file:<path>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "centroid" {
            return Ok(TypeVectorSpec::Centroid);
        }
        match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(TypeVectorSpec::File(PathBuf::from(p))),
            _ => Err(Error::InvalidConfig(format!(
                "type vectors must be `centroid` or `file:<path>`, got `{s}`"
            ))),
        }
    }
}

impl std::fmt::Display for TypeVectorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TypeVectorSpec::Centroid => f.write_str("centroid"),
            TypeVectorSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workdir: PathBuf,
    pub triples: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub type_vectors: TypeVectorSpec,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub clusterer: ClustererKind,
    pub restarts: usize,
    pub max_iters: usize,
    pub type_policy: TypePolicy,
    /// Largest number of relation vectors clustered per relation.
    pub cap: usize,
    pub runs: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub jobs: usize,
    /// Relations to refine; empty means all.
    pub relations: Vec<String>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("finegres-work"),
            triples: None,
            types: None,
            type_vectors: TypeVectorSpec::Centroid,
            model: ModelKind::TransE,
            train: TrainConfig::default(),
            clusterer: ClustererKind::KMeans,
            restarts: 10,
            max_iters: 300,
            type_policy: TypePolicy::First,
            cap: 20_000,
            runs: 10,
            test_fraction: 0.2,
            seed: 7,
            jobs: 1,
            relations: Vec::new(),
            synth: SynthConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "workdir" => self.workdir = PathBuf::from(v),
            "triples" => self.triples = Some(PathBuf::from(v)),
            "types" => self.types = Some(PathBuf::from(v)),
            "type_vectors" => self.type_vectors = TypeVectorSpec::parse(v)?,
            "model" => self.model = v.parse()?,
            "dim" => self.train.dim = parse_num(key, v)?,
            "epochs" => self.train.epochs = parse_num(key, v)?,
            "learning_rate" => self.train.learning_rate = parse_num(key, v)?,
            "margin" => self.train.margin = parse_num(key, v)?,
            "negatives" => self.train.negatives = parse_num(key, v)?,
            "batch_size" => self.train.batch_size = parse_num(key, v)?,
            "clusterer" => self.clusterer = v.parse()?,
            "restarts" => self.restarts = parse_num(key, v)?,
            "max_iters" => self.max_iters = parse_num(key, v)?,
            "type_policy" => self.type_policy = TypePolicy::parse(v)?,
            "cap" => self.cap = parse_num(key, v)?,
            "runs" => self.runs = parse_num(key, v)?,
            "test_fraction" => self.test_fraction = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "jobs" => self.jobs = parse_num(key, v)?,
            "relations" => {
                self.relations = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            }
            "synth.relations" => self.synth.relations = parse_num(key, v)?,
            "synth.senses" => self.synth.senses = parse_list(key, v)?,
            "synth.subtypes" => self.synth.subtypes = parse_num(key, v)?,
            "synth.entities_per_type" => self.synth.entities_per_type = parse_num(key, v)?,
            "synth.facts_per_pair" => self.synth.facts_per_pair = parse_num(key, v)?,
            "synth.anchors" => self.synth.anchors = parse_num(key, v)?,
            "synth.noise" => self.synth.noise = parse_num(key, v)?,
            "synth.type_dim" => self.synth.type_dim = parse_num(key, v)?,
            "synth.type_jitter" => self.synth.type_jitter = parse_num(key, v)?,
            other => return Err(Error::InvalidConfig(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("{source_name}: line {}: expected `key = value`", i + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::InvalidConfig(format!("{source_name}: line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.clusterer_spec().validate()?;
        if self.cap < 2 {
            return Err(Error::InvalidConfig("cap must be at least 2".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig("test_fraction must be in (0, 1)".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        self.synth.validate()
    }

    pub fn triples_path(&self) -> PathBuf {
        self.triples.clone().unwrap_or_else(|| self.workdir.join("triples.tsv"))
    }

    pub fn types_path(&self) -> PathBuf {
        self.types.clone().unwrap_or_else(|| self.workdir.join("types.tsv"))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn clusterer_spec(&self) -> ClustererSpec {
        ClustererSpec {
            kind: self.clusterer,
            seed: self.seed,
            max_iters: self.max_iters,
            restarts: self.restarts,
            ..ClustererSpec::kmeans(self.seed)
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// Every setting as `key = value` lines, in a fixed order. Feeding the
    /// text back through [`RunConfig::apply_text`] reproduces the config.
    /// `jobs` is left out since it never changes any output.
    pub fn echo(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("workdir", self.workdir.display().to_string());
        kv("triples", self.triples_path().display().to_string());
        kv("types", self.types_path().display().to_string());
        kv("type_vectors", self.type_vectors.to_string());
        kv("model", self.model.to_string());
        kv("dim", self.train.dim.to_string());
        kv("epochs", self.train.epochs.to_string());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("margin", self.train.margin.to_string());
        kv("negatives", self.train.negatives.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("clusterer", self.clusterer.to_string());
        kv("restarts", self.restarts.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("type_policy", self.type_policy.to_string());
        kv("cap", self.cap.to_string());
        kv("runs", self.runs.to_string());
        kv("test_fraction", self.test_fraction.to_string());
        kv("seed", self.seed.to_string());
        kv("relations", self.relations.join(","));
        kv("synth.relations", self.synth.relations.to_string());
        kv("synth.senses", join(&self.synth.senses));
        kv("synth.subtypes", self.synth.subtypes.to_string());
        kv("synth.entities_per_type", self.synth.entities_per_type.to_string());
        kv("synth.facts_per_pair", self.synth.facts_per_pair.to_string());
        kv("synth.anchors", self.synth.anchors.to_string());
        kv("synth.noise", self.synth.noise.to_string());
        kv("synth.type_dim", self.synth.type_dim.to_string());
        kv("synth.type_jitter", self.synth.type_jitter.to_string());
        s
    }
}
