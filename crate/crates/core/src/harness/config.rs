use std::fmt::Write as _;
use std::path::PathBuf;

use super::{HarnessError, ModelKind, Regime, Result};
use crate::corpus::{EncodingRegime, TaskFamily};

/// Where the stories of an experiment come from.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskSource {
    Generated(Vec<TaskFamily>),
    Files {
        name: String,
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub regime: Regime,
    pub source: TaskSource,
    pub train_stories: usize,
    pub test_stories: usize,
    pub epochs: usize,
    /// Epochs for the fact-search stage of the pipeline.
    pub search_epochs: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub margin: f64,
    pub memory_rows: usize,
    pub memory_width: usize,
    pub max_hops: usize,
    pub max_answer_len: usize,
    pub answer_threshold: f64,
    pub top_n: usize,
    pub story_min: Option<usize>,
    pub story_max: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for everything except the model, regime and data.
    pub fn new(model: ModelKind, regime: Regime, source: TaskSource) -> Self {
        ExperimentConfig {
            model,
            regime,
            source,
            train_stories: 1000,
            test_stories: 200,
            epochs: 20,
            search_epochs: 20,
            seed: 1,
            embed_dim: 32,
            hidden_dim: 48,
            attention_dim: 32,
            lr: 1e-3,
            clip_norm: 5.0,
            margin: 0.1,
            memory_rows: 64,
            memory_width: 20,
            max_hops: 3,
            max_answer_len: 4,
            answer_threshold: 0.5,
            top_n: 3,
            story_min: None,
            story_max: None,
        }
    }

    /// Reads flat `key = value` lines. `#` starts a comment; unknown or
    /// repeated keys are errors. `model` and `regime` are required, plus either
    /// `tasks` or both `train_file` and `test_file`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if pairs.iter().any(|(_, pk, _)| *pk == k) {
                return Err(cfg_err(format!("line {}: duplicate key {k}", i + 1)));
            }
            pairs.push((i + 1, k, v));
        }
        let get = |key: &str| pairs.iter().find(|(_, k, _)| k == key).map(|(_, _, v)| v.as_str());

        let model: ModelKind = get("model").ok_or_else(|| cfg_err("missing key model".into()))?.parse()?;
        let regime: Regime = get("regime").ok_or_else(|| cfg_err("missing key regime".into()))?.parse()?;
        let source = match (get("tasks"), get("train_file"), get("test_file")) {
            (Some(tasks), None, None) => {
                let families = tasks
                    .split(',')
                    .map(|t| t.trim().parse::<TaskFamily>().map_err(|e| cfg_err(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                TaskSource::Generated(families)
            }
            (None, Some(train), Some(test)) => {
                let train = PathBuf::from(train);
                let name = match get("task_name") {
                    Some(n) => n.to_string(),
                    None => train
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .ok_or_else(|| cfg_err("cannot derive task_name from train_file".into()))?
                        .to_string(),
                };
                TaskSource::Files {
                    name,
                    train,
                    test: PathBuf::from(test),
                }
            }
            _ => return Err(cfg_err("give either tasks or both train_file and test_file".into())),
        };
        let mut cfg = ExperimentConfig::new(model, regime, source);

        for (line, key, value) in &pairs {
            let bad = |what: &str| cfg_err(format!("line {line}: {key} must be {what}, got {value:?}"));
            let int = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
            let float = || value.parse::<f64>().map_err(|_| bad("a number"));
            match key.as_str() {
                "model" | "regime" | "tasks" | "train_file" | "test_file" | "task_name" => {}
                "train_stories" => cfg.train_stories = int()?,
                "test_stories" => cfg.test_stories = int()?,
                "epochs" => cfg.epochs = int()?,
                "search_epochs" => cfg.search_epochs = int()?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("a non-negative integer"))?,
                "embed_dim" => cfg.embed_dim = int()?,
                "hidden_dim" => cfg.hidden_dim = int()?,
                "attention_dim" => cfg.attention_dim = int()?,
                "lr" => cfg.lr = float()?,
                "clip_norm" => cfg.clip_norm = float()?,
                "margin" => cfg.margin = float()?,
                "memory_rows" => cfg.memory_rows = int()?,
                "memory_width" => cfg.memory_width = int()?,
                "max_hops" => cfg.max_hops = int()?,
                "max_answer_len" => cfg.max_answer_len = int()?,
                "answer_threshold" => cfg.answer_threshold = float()?,
                "top_n" => cfg.top_n = int()?,
                "story_min" => cfg.story_min = Some(int()?),
                "story_max" => cfg.story_max = Some(int()?),
                _ => return Err(cfg_err(format!("line {line}: unknown key {key}"))),
            }
        }
        if get("search_epochs").is_none() {
            cfg.search_epochs = cfg.epochs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the model/regime pairing and every hyperparameter.
    pub fn validate(&self) -> Result<()> {
        if !self.model.accepts(self.regime) {
            return Err(cfg_err(format!(
                "model {} cannot run with regime {}",
                self.model, self.regime
            )));
        }
        if let TaskSource::Generated(f) = &self.source {
            if f.is_empty() {
                return Err(cfg_err("tasks must list at least one family".into()));
            }
            for (i, a) in f.iter().enumerate() {
                if f[..i].contains(a) {
                    return Err(cfg_err(format!("task {a} listed twice")));
                }
            }
        }
        let positive = [
            ("train_stories", self.train_stories),
            ("test_stories", self.test_stories),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("memory_width", self.memory_width),
            ("max_hops", self.max_hops),
            ("max_answer_len", self.max_answer_len),
            ("top_n", self.top_n),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(cfg_err(format!("{name} must be positive")));
            }
        }
        if self.memory_rows < 3 {
            return Err(cfg_err("memory_rows must be at least 3".into()));
        }
        for (name, v) in [("lr", self.lr), ("clip_norm", self.clip_norm), ("margin", self.margin)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(cfg_err(format!("{name} must be positive")));
            }
        }
        if !(self.answer_threshold > 0.0 && self.answer_threshold <= 1.0) {
            return Err(cfg_err("answer_threshold must lie in (0, 1]".into()));
        }
        if let (Some(lo), Some(hi)) = (self.story_min, self.story_max) {
            if lo > hi {
                return Err(cfg_err("story_min exceeds story_max".into()));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "regime = {}", self.regime);
        match &self.source {
            TaskSource::Generated(f) => {
                let names: Vec<&str> = f.iter().map(|t| t.name()).collect();
                let _ = writeln!(s, "tasks = {}", names.join(","));
            }
            TaskSource::Files { name, train, test } => {
                let _ = writeln!(s, "train_file = {}", train.display());
                let _ = writeln!(s, "test_file = {}", test.display());
                let _ = writeln!(s, "task_name = {name}");
            }
        }
        let ints = [
            ("train_stories", self.train_stories),
            ("test_stories", self.test_stories),
            ("epochs", self.epochs),
            ("search_epochs", self.search_epochs),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("memory_rows", self.memory_rows),
            ("memory_width", self.memory_width),
            ("max_hops", self.max_hops),
            ("max_answer_len", self.max_answer_len),
            ("top_n", self.top_n),
        ];
        for (k, v) in ints {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        for (k, v) in [
            ("lr", self.lr),
            ("clip_norm", self.clip_norm),
            ("margin", self.margin),
            ("answer_threshold", self.answer_threshold),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        if let Some(v) = self.story_min {
            let _ = writeln!(s, "story_min = {v}");
        }
        if let Some(v) = self.story_max {
            let _ = writeln!(s, "story_max = {v}");
        }
        s
    }

    /// Input encoding used to feed the NMT or NTM reader.
    pub fn reader_regime(&self) -> Option<EncodingRegime> {
        match self.regime {
            Regime::Encoding(EncodingRegime::PredictedMarked) => Some(EncodingRegime::MarkedPassage),
            Regime::Encoding(r) => Some(r),
            _ => None,
        }
    }
}

fn cfg_err(msg: String) -> HarnessError {
    HarnessError::Config(msg)
}
