//! Flat `key = value` experiment configuration.
//!
//! Values are applied in order: config file, then command-line flags, then
//! `--set KEY=VALUE` overrides. A `profile` key, wherever it appears, is
//! applied before everything else because it replaces the model sizes
//! wholesale.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use umhi_core::eval::pipeline::{Method, PipelineConfig};
use umhi_core::graph::{Window, DEFAULT_HOLD_PER_UNFOLLOW};
use umhi_core::netstats::PageRankConfig;
use umhi_core::optim::AdamConfig;

use crate::error::{CliError, Result};

/// Environment variable that overrides the default output directory.
pub const OUT_DIR_ENV: &str = "UMHI_OUT";
const DEFAULT_OUT_DIR: &str = "umhi-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Published model sizes.
    Paper,
    /// Narrower layers for a desktop budget.
    Desk,
}

impl Profile {
    fn as_str(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }

    fn pipeline(self) -> PipelineConfig {
        match self {
            Profile::Paper => PipelineConfig::paper(),
            Profile::Desk => PipelineConfig::desk(),
        }
    }
}

/// Moment coefficients shared by the content pretraining and fusion optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdamMode {
    Published,
    Conventional,
}

impl AdamMode {
    fn as_str(self) -> &'static str {
        match self {
            AdamMode::Published => "published",
            AdamMode::Conventional => "conventional",
        }
    }

    fn with_lr(self, lr: f64) -> AdamConfig {
        match self {
            AdamMode::Published => AdamConfig::published(lr),
            AdamMode::Conventional => AdamConfig::conventional(lr),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub relations: Option<PathBuf>,
    pub posts: Option<PathBuf>,
    pub out: PathBuf,
    pub window: Window,
    pub hold_per_unfollow: f64,
    pub bins: usize,
    pub pagerank: PageRankConfig,
    pub workers: usize,
    pub adam: AdamMode,
    pub sweep: bool,
    pub sweep_fold: usize,
    pub sweep_fractions: Vec<f64>,
    pub pipeline: PipelineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        ExperimentConfig {
            profile: Profile::Paper,
            relations: None,
            posts: None,
            out,
            window: Window::unbounded(),
            hold_per_unfollow: DEFAULT_HOLD_PER_UNFOLLOW,
            bins: 10,
            pagerank: PageRankConfig::default(),
            workers: 1,
            adam: AdamMode::Published,
            sweep: false,
            sweep_fold: 0,
            sweep_fractions: umhi_core::eval::pipeline::default_fractions(),
            pipeline: PipelineConfig::paper(),
        }
    }
}

/// Every accepted key, in the order used when rendering.
pub const KEYS: &[&str] = &[
    "profile",
    "relations",
    "posts",
    "out",
    "window_start",
    "window_end",
    "seed",
    "workers",
    "folds",
    "threshold",
    "methods",
    "hold_per_unfollow",
    "bins",
    "pagerank.damping",
    "pagerank.tol",
    "pagerank.max_iter",
    "line.dim",
    "line.epochs",
    "line.negatives",
    "line.lr0",
    "word.dim",
    "word.window",
    "word.negatives",
    "word.epochs",
    "word.lr0",
    "han.word_hidden",
    "han.post_hidden",
    "han.word_att",
    "han.post_att",
    "han.max_tokens",
    "han.max_posts",
    "han.init_scale",
    "adam",
    "pretrain.epochs",
    "pretrain.batch_size",
    "pretrain.lr",
    "pretrain.validation_fraction",
    "mf.k",
    "mf.lambda",
    "mf.lr",
    "mf.epochs",
    "mf.zeros_per_positive",
    "mf.full_sum_limit",
    "fusion.hidden",
    "fusion.epochs",
    "fusion.batch_size",
    "fusion.lr",
    "fusion.validation_fraction",
    "walk.dim",
    "walk.walks_per_node",
    "walk.walk_len",
    "walk.window",
    "walk.p",
    "walk.q",
    "walk.negatives",
    "walk.epochs",
    "walk.lr0",
    "baseline.l2",
    "svd.rank",
    "sweep",
    "sweep.fold",
    "sweep.fractions",
];

fn bad(key: &str, value: &str, reason: impl Display) -> CliError {
    CliError::BadValue { key: key.to_string(), value: value.to_string(), reason: reason.to_string() }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| num(key, s.trim())).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path_value(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        let p = &mut self.pipeline;
        match key {
            "profile" => {
                self.profile = match v {
                    "paper" => Profile::Paper,
                    "desk" => Profile::Desk,
                    _ => return Err(bad(key, v, "expected `paper` or `desk`")),
                };
                let seed = p.seed;
                let methods = p.methods.clone();
                *p = self.profile.pipeline();
                p.seed = seed;
                p.methods = methods;
                p.pretrain.adam = self.adam.with_lr(p.pretrain.adam.lr);
                p.fusion.adam = self.adam.with_lr(p.fusion.adam.lr);
            }
            "relations" => self.relations = (!v.is_empty()).then(|| PathBuf::from(v)),
            "posts" => self.posts = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "window_start" => self.window.start = num(key, v)?,
            "window_end" => self.window.end = num(key, v)?,
            "seed" => p.seed = num(key, v)?,
            "workers" => {
                self.workers = num(key, v)?;
                if self.workers == 0 {
                    return Err(bad(key, v, "need at least one worker"));
                }
            }
            "folds" => p.folds = num(key, v)?,
            "threshold" => p.threshold = num(key, v)?,
            "methods" => {
                let methods: Option<Vec<Method>> = v.split(',').map(|s| Method::parse(s.trim())).collect();
                p.methods = methods.ok_or_else(|| bad(key, v, "unknown method name"))?;
            }
            "hold_per_unfollow" => self.hold_per_unfollow = num(key, v)?,
            "bins" => self.bins = num(key, v)?,
            "pagerank.damping" => self.pagerank.damping = num(key, v)?,
            "pagerank.tol" => self.pagerank.tol = num(key, v)?,
            "pagerank.max_iter" => self.pagerank.max_iter = num(key, v)?,
            "line.dim" => p.line.dim = num(key, v)?,
            "line.epochs" => p.line.epochs = num(key, v)?,
            "line.negatives" => p.line.negatives = num(key, v)?,
            "line.lr0" => p.line.lr0 = num(key, v)?,
            "word.dim" => p.word.dim = num(key, v)?,
            "word.window" => p.word.window = num(key, v)?,
            "word.negatives" => p.word.negatives = num(key, v)?,
            "word.epochs" => p.word.epochs = num(key, v)?,
            "word.lr0" => p.word.lr0 = num(key, v)?,
            "han.word_hidden" => p.han.word_hidden = num(key, v)?,
            "han.post_hidden" => p.han.post_hidden = num(key, v)?,
            "han.word_att" => p.han.word_att = num(key, v)?,
            "han.post_att" => p.han.post_att = num(key, v)?,
            "han.max_tokens" => p.han.max_tokens = num(key, v)?,
            "han.max_posts" => p.han.max_posts = num(key, v)?,
            "han.init_scale" => p.han.init_scale = num(key, v)?,
            "adam" => {
                self.adam = match v {
                    "published" => AdamMode::Published,
                    "conventional" => AdamMode::Conventional,
                    _ => return Err(bad(key, v, "expected `published` or `conventional`")),
                };
                p.pretrain.adam = self.adam.with_lr(p.pretrain.adam.lr);
                p.fusion.adam = self.adam.with_lr(p.fusion.adam.lr);
            }
            "pretrain.epochs" => p.pretrain.epochs = num(key, v)?,
            "pretrain.batch_size" => p.pretrain.batch_size = num(key, v)?,
            "pretrain.lr" => p.pretrain.adam.lr = num(key, v)?,
            "pretrain.validation_fraction" => p.pretrain.validation_fraction = num(key, v)?,
            "mf.k" => p.mf.k = num(key, v)?,
            "mf.lambda" => p.mf.lambda = num(key, v)?,
            "mf.lr" => p.mf.lr = num(key, v)?,
            "mf.epochs" => p.mf.epochs = num(key, v)?,
            "mf.zeros_per_positive" => p.mf.zeros_per_positive = num(key, v)?,
            "mf.full_sum_limit" => p.mf.full_sum_limit = num(key, v)?,
            "fusion.hidden" => p.fusion.hidden = list(key, v)?,
            "fusion.epochs" => p.fusion.epochs = num(key, v)?,
            "fusion.batch_size" => p.fusion.batch_size = num(key, v)?,
            "fusion.lr" => p.fusion.adam.lr = num(key, v)?,
            "fusion.validation_fraction" => p.fusion.validation_fraction = num(key, v)?,
            "walk.dim" => p.walk.dim = num(key, v)?,
            "walk.walks_per_node" => p.walk.walks_per_node = num(key, v)?,
            "walk.walk_len" => p.walk.walk_len = num(key, v)?,
            "walk.window" => p.walk.window = num(key, v)?,
            "walk.p" => p.walk.p = num(key, v)?,
            "walk.q" => p.walk.q = num(key, v)?,
            "walk.negatives" => p.walk.negatives = num(key, v)?,
            "walk.epochs" => p.walk.epochs = num(key, v)?,
            "walk.lr0" => p.walk.lr0 = num(key, v)?,
            "baseline.l2" => p.baseline_l2 = num(key, v)?,
            "svd.rank" => p.svd_rank = num(key, v)?,
            "sweep" => self.sweep = num(key, v)?,
            "sweep.fold" => self.sweep_fold = num(key, v)?,
            "sweep.fractions" => self.sweep_fractions = list(key, v)?,
            _ => return Err(CliError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let p = &self.pipeline;
        Ok(match key {
            "profile" => self.profile.as_str().to_string(),
            "relations" => path_value(&self.relations),
            "posts" => path_value(&self.posts),
            "out" => self.out.display().to_string(),
            "window_start" => self.window.start.to_string(),
            "window_end" => self.window.end.to_string(),
            "seed" => p.seed.to_string(),
            "workers" => self.workers.to_string(),
            "folds" => p.folds.to_string(),
            "threshold" => p.threshold.to_string(),
            "methods" => p.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
            "hold_per_unfollow" => self.hold_per_unfollow.to_string(),
            "bins" => self.bins.to_string(),
            "pagerank.damping" => self.pagerank.damping.to_string(),
            "pagerank.tol" => self.pagerank.tol.to_string(),
            "pagerank.max_iter" => self.pagerank.max_iter.to_string(),
            "line.dim" => p.line.dim.to_string(),
            "line.epochs" => p.line.epochs.to_string(),
            "line.negatives" => p.line.negatives.to_string(),
            "line.lr0" => p.line.lr0.to_string(),
            "word.dim" => p.word.dim.to_string(),
            "word.window" => p.word.window.to_string(),
            "word.negatives" => p.word.negatives.to_string(),
            "word.epochs" => p.word.epochs.to_string(),
            "word.lr0" => p.word.lr0.to_string(),
            "han.word_hidden" => p.han.word_hidden.to_string(),
            "han.post_hidden" => p.han.post_hidden.to_string(),
            "han.word_att" => p.han.word_att.to_string(),
            "han.post_att" => p.han.post_att.to_string(),
            "han.max_tokens" => p.han.max_tokens.to_string(),
            "han.max_posts" => p.han.max_posts.to_string(),
            "han.init_scale" => p.han.init_scale.to_string(),
            "adam" => self.adam.as_str().to_string(),
            "pretrain.epochs" => p.pretrain.epochs.to_string(),
            "pretrain.batch_size" => p.pretrain.batch_size.to_string(),
            "pretrain.lr" => p.pretrain.adam.lr.to_string(),
            "pretrain.validation_fraction" => p.pretrain.validation_fraction.to_string(),
            "mf.k" => p.mf.k.to_string(),
            "mf.lambda" => p.mf.lambda.to_string(),
            "mf.lr" => p.mf.lr.to_string(),
            "mf.epochs" => p.mf.epochs.to_string(),
            "mf.zeros_per_positive" => p.mf.zeros_per_positive.to_string(),
            "mf.full_sum_limit" => p.mf.full_sum_limit.to_string(),
            "fusion.hidden" => join(&p.fusion.hidden),
            "fusion.epochs" => p.fusion.epochs.to_string(),
            "fusion.batch_size" => p.fusion.batch_size.to_string(),
            "fusion.lr" => p.fusion.adam.lr.to_string(),
            "fusion.validation_fraction" => p.fusion.validation_fraction.to_string(),
            "walk.dim" => p.walk.dim.to_string(),
            "walk.walks_per_node" => p.walk.walks_per_node.to_string(),
            "walk.walk_len" => p.walk.walk_len.to_string(),
            "walk.window" => p.walk.window.to_string(),
            "walk.p" => p.walk.p.to_string(),
            "walk.q" => p.walk.q.to_string(),
            "walk.negatives" => p.walk.negatives.to_string(),
            "walk.epochs" => p.walk.epochs.to_string(),
            "walk.lr0" => p.walk.lr0.to_string(),
            "baseline.l2" => p.baseline_l2.to_string(),
            "svd.rank" => p.svd_rank.to_string(),
            "sweep" => self.sweep.to_string(),
            "sweep.fold" => self.sweep_fold.to_string(),
            "sweep.fractions" => join(&self.sweep_fractions),
            _ => return Err(CliError::UnknownKey(key.to_string())),
        })
    }

    /// All keys with their current values.
    pub fn entries(&self) -> Vec<(String, String)> {
        KEYS.iter().map(|&k| (k.to_string(), self.get(k).expect("listed key"))).collect()
    }

    /// The configuration as a config file that reproduces it.
    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Applies `(key, value)` pairs with the last `profile` first.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        if let Some((k, v)) = pairs.iter().rev().find(|(k, _)| k == "profile") {
            cfg.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

/// Parses `key = value` lines; blank lines and lines starting with `#` are skipped.
pub fn parse_config_text(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected `key = value`", origin.display(), n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_text(&text, path)
}

/// Splits a `KEY=VALUE` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("`{s}` is not KEY=VALUE")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
